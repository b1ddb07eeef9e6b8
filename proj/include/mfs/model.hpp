#ifndef MFS_MODEL_HPP
#define MFS_MODEL_HPP

#include <functional>
#include <memory>
#include <vector>

#include "mfs/chain.hpp"
#include "mfs/common.hpp"
#include "mfs/measure.hpp"
#include "mfs/scalar_fn.hpp"

namespace mfs {

struct TradingExampleSpec;

/// One vector-valued coefficient entry b(x, m) = c + A x + k * <psi, m(.,j)>.
/// A and k may be empty; j = -1 integrates psi over every mode.
struct VecCoef {
    Vec c;
    Mat A;
    Vec k;
    int mom_mode = -1;
    ScalarFn mom_psi;

    Vec eval(const Vec& x, const DiscreteLawS& m) const;
    static VecCoef constant(Vec v) {
        VecCoef out;
        out.c = std::move(v);
        return out;
    }
};

/// Scalar coefficient entry for running/terminal rewards:
/// value = c + in_x(x) + k * <psi, m(.,j)>.
struct ScalarCoef {
    double c = 0.0;
    ScalarFn in_x = ScalarFn::constant(0.0);
    double k = 0.0;
    int mom_mode = -1;
    ScalarFn mom_psi;

    double eval(const Vec& x, const DiscreteLawS& m) const;
    static ScalarCoef constant(double v) {
        ScalarCoef out;
        out.c = v;
        return out;
    }
};

/// Model coefficients (b, sigma, f, h) indexed by chain state q and mode i.
/// sigma is diagonal. The trading family replaces the tabulated f with the
/// closed-form running reward of the regime-switching example.
struct CoefficientSet {
    int n_states = 1;
    int n_modes = 1;
    int dim = 1;

    std::vector<VecCoef> drift;        // (q, i) row-major
    std::vector<VecCoef> sigma_diag;   // (q, i) row-major

    std::vector<ScalarCoef> running;   // f by (q, i)
    bool running_time_scaled = false;  // multiply f by (T - t)
    std::vector<ScalarCoef> terminal;  // h by (q, i)
    double horizon = 1.0;

    // When set, f is the trading-example family and the tabulated entries
    // are ignored.
    std::shared_ptr<const TradingExampleSpec> trading_f;

    const VecCoef& b(int q, int i) const { return drift[q * n_modes + i]; }
    const VecCoef& sig(int q, int i) const { return sigma_diag[q * n_modes + i]; }

    Vec drift_at(int q, const Vec& x, int i, const DiscreteLawS& m) const;
    Vec sigma_at(int q, const Vec& x, int i, const DiscreteLawS& m) const;
    double f_at(double t, int q, const Vec& x, int i, const DiscreteLawS& m) const;
    double h_at(int q, const Vec& x, int i, const DiscreteLawS& m) const;
};

/// Per-step evaluation cache: the measure-dependent moments of every entry
/// are integrated once, after which lookups are O(1) in the support size.
/// Used by the particle loop, where the same snapshot serves every particle.
class CoeffCache {
public:
    CoeffCache(const CoefficientSet& cs, double t, const DiscreteLawS& m);

    Vec drift(int q, const Vec& x, int i) const;
    Vec sigma(int q, const Vec& x, int i) const;
    double f(int q, const Vec& x, int i) const;
    double h(int q, const Vec& x, int i) const;

private:
    const CoefficientSet& cs_;
    double t_;
    std::vector<double> drift_mom_, sigma_mom_, f_mom_, h_mom_;
    std::vector<double> trading_f_;     // per chain state when the family is active
};

/// Switching costs g_ij(t, x), zero on the diagonal. Each off-diagonal entry
/// is either a constant or a separable profile c(t) * psi(x) with
/// c(t) in {1, T - t}.
struct CostMatrix {
    struct Entry {
        double scale = 0.0;
        bool time_to_horizon = false;   // multiply by (T - t)
        ScalarFn psi = ScalarFn::constant(1.0);
    };

    int n_modes = 0;
    double horizon = 1.0;
    std::vector<Entry> entries;        // (i, j) row-major; diagonal ignored

    static CostMatrix constant(int n_modes, double value);
    /// g_ij = (T - t) * psi(x) for all i != j.
    static CostMatrix separable_to_horizon(int n_modes, double horizon, ScalarFn psi);

    double cost(int i, int j, double t, const Vec& x) const;
};

/// Law-level record of one switching event: the prior-mode distribution and,
/// per prior mode, the conditional law over (x, new mode).
struct SwitchRecord {
    int ordinal = 1;
    Vec prior;                          // P(previous mode = i)
    std::vector<DiscreteLawS> conditional;  // per prior mode, law over (x, j)
};

ValidationReport validate_costs(const CostMatrix& g, const std::vector<double>& t_grid,
                                const std::vector<Vec>& x_sample);

/// Default sampling grids for validate_costs: 11 times on [0, T) and 21
/// points per axis on the box [lo, hi]^d.
std::vector<double> default_time_grid(double horizon);
std::vector<Vec> default_x_grid(double lo, double hi, int dim = 1);

/// F(t, m, l) = sum_q l(q) * integral of f(t, q, y, m) against m.
double aggregate_F(double t, const DiscreteLawS& m, const ChainLaw& l,
                   const CoefficientSet& coeffs);

/// H(m, l) = sum_q l(q) * integral of h(q, y, m) against m.
double aggregate_H(const DiscreteLawS& m, const ChainLaw& l, const CoefficientSet& coeffs);

/// Law-level cost of applying kernel k to m at time t.
double switch_cost(const DiscreteLawS& m, const InterventionKernel& k, double t,
                   const CostMatrix& g);

/// G^n(t) = sum_i sum_j integral g_ij(t, x) m^i(dx, j) P(prior = i).
double aggregate_G(double t, const SwitchRecord& rec, const CostMatrix& g);

/// Builds the switch record describing the event (m, k); aggregate_G on the
/// result reproduces switch_cost(m, k, t, g).
SwitchRecord make_switch_record(const DiscreteLawS& m, const InterventionKernel& k,
                                int ordinal = 1);

} // namespace mfs

#endif
