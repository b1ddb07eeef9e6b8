#ifndef MFS_FUNCTIONAL_HPP
#define MFS_FUNCTIONAL_HPP

#include <vector>

#include "mfs/chain.hpp"
#include "mfs/common.hpp"
#include "mfs/measure.hpp"
#include "mfs/model.hpp"

namespace mfs {

/// Value-function candidate of cylindrical form
///   u(t, m; l) = sum of terms  tau(t) * w(l) * G(v(m))
/// where v_j = <psi_j, m(., mode_j)> is the moment vector, tau is 1 or
/// (T - t), w is 1 or l(q), and G comes from a closed catalog (affine,
/// product, min-with-constant, positive-part). All derivatives used by the
/// generators are analytic.
class CylindricalFunctional {
public:
    struct MomentBasis {
        int mode = 0;
        ScalarFn psi;
    };

    enum class TimeWeight { One, ToHorizon };      // 1 or (T - t)
    enum class Shape { Affine, Product, Min, Pos };

    struct Term {
        TimeWeight tw = TimeWeight::One;
        int lstate = -1;        // multiply by l(q); -1 = no l factor
        double coef = 1.0;
        Shape shape = Shape::Affine;
        // Affine: c0 + sum lin[j] v_j ; Product: v_a * v_b ;
        // Min: v_a ∧ threshold ; Pos: (v_a - threshold)+
        double c0 = 0.0;
        Vec lin;
        int a = 0, b = 0;
        double threshold = 0.0;
    };

    CylindricalFunctional() = default;
    CylindricalFunctional(std::vector<MomentBasis> basis, double horizon)
        : basis_(std::move(basis)), horizon_(horizon) {}

    void add_term(Term t) { terms_.push_back(std::move(t)); }

    const std::vector<MomentBasis>& basis() const { return basis_; }
    double horizon() const { return horizon_; }
    int n_moments() const { return static_cast<int>(basis_.size()); }

    /// Moment vector v(m).
    Vec moments(const DiscreteLawS& m) const;

    double eval(double t, const DiscreteLawS& m, const ChainLaw& l) const;
    double eval_moments(double t, const Vec& v, const ChainLaw& l) const;

    /// d/dt of the whole candidate at the actual l.
    double time_derivative(double t, const Vec& v, const ChainLaw& l) const;

    /// Gradient of the outer map in the moment coordinates, with l frozen to
    /// the point mass at chain state q (the component entering the flow
    /// generators). Sets *kink when some active Min/Pos term sits within
    /// kink_tol of its threshold.
    Vec outer_gradient(double t, const Vec& v, int q, bool* kink = nullptr) const;
    /// Same at a general chain law.
    Vec outer_gradient_law(double t, const Vec& v, const ChainLaw& l,
                           bool* kink = nullptr) const;

    bool near_kink(const Vec& v, double tol = 1e-6) const;

    static constexpr double kink_tol = 1e-6;

    // ---- convenience builders -------------------------------------------

    /// u = coef * tau(t) * <psi, m(., mode)>.
    static CylindricalFunctional linear_moment(int mode, ScalarFn psi, double horizon,
                                               double coef = 1.0,
                                               TimeWeight tw = TimeWeight::One);
    static CylindricalFunctional constant(double value, double horizon);

private:
    std::vector<MomentBasis> basis_;
    double horizon_ = 1.0;
    std::vector<Term> terms_;
};

/// Pointwise linear derivative of the candidate and its spatial derivatives,
/// taken at chain state q.
struct LinearDerivative {
    double value = 0.0;
    Vec grad_x;
    Vec hess_diag;
    bool kink = false;
};

/// Output of the variational-inequality residual: the diffusion component
/// -(L u + F + Q u), the obstacle gap u - M[u], and their minimum.
struct ViResidual {
    double diffusion = 0.0;
    double obstacle_gap = 0.0;
    double min = 0.0;
    bool kink = false;
};

struct InterventionResult {
    double value = 0.0;             // M[u]
    InterventionKernel kernel;      // maximizing relabeling
    double relabeled = 0.0;         // mass moved by the maximizer
};

struct InterventionOptions {
    int grid = 20;                  // fractions {0, 1/K, ..., 1}
    bool refine = true;             // one local refinement pass
    double min_relabeled = 1e-9;    // strictness: exclude the identity
    long budget = 4'000'000;        // max enumerated kernel combinations
    int sweeps = 3;                 // coordinate-ascent passes past the budget
};

double eval(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
            const ChainLaw& l);

/// delta_{l,m} u(t, m, y; l, q) and its x-derivatives at y = (x, i).
LinearDerivative linear_derivative(const CylindricalFunctional& u, double t,
                                   const DiscreteLawS& m, const Vec& x, int mode,
                                   const ChainLaw& l, int q);

/// Drift-diffusion generator: dt-term plus the l- and m-integrated second
/// order operator applied to the linear derivative.
double generator_L(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                   const ChainLaw& l, const CoefficientSet& coeffs, bool* kink = nullptr);

/// Chain-jump generator: sum_p l(p) integral of
/// sum_{q != p} lambda_pq(x) [delta u(.; q) - delta u(.; p)] against m.
double generator_Q(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                   const ChainLaw& l, const RateFunction& rf, bool* kink = nullptr);

/// Best value of an instantaneous relabeling net of switching costs,
/// approximated by per-atom grid search over row-stochastic fractions.
InterventionResult intervention_value(const CylindricalFunctional& u, double t,
                                      const DiscreteLawS& m, const ChainLaw& l,
                                      const CostMatrix& g,
                                      const InterventionOptions& opts = {});

ViResidual vi_residual(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                       const ChainLaw& l, const CoefficientSet& coeffs,
                       const RateFunction& rf, const CostMatrix& g,
                       const InterventionOptions& opts = {});

/// Residual of the limit system: coefficients and rewards averaged against
/// the fast-block stationary distributions, jump part from the aggregated
/// generator. l_bar lives on the block states.
ViResidual limit_vi_residual(const CylindricalFunctional& u, double t,
                             const DiscreteLawS& m, const ChainLaw& l_bar,
                             const TwoScaleSpec& spec, const CoefficientSet& coeffs,
                             const CostMatrix& g, const InterventionOptions& opts = {});

/// Averaged coefficient set of the limit problem (block states as chain
/// states, drift/diffusion/rewards averaged with the block stationaries).
CoefficientSet averaged_coefficients(const TwoScaleSpec& spec, const CoefficientSet& coeffs);

/// Mixture family v^i(t, x; p) = tau(t) * psi_{i,p}(x) lifted to a
/// cylindrical candidate; used to guard the lifting code path.
struct StandardFamily {
    int n_modes = 1;
    int n_states = 1;
    double horizon = 1.0;
    std::vector<ScalarFn> v;        // (p, i) row-major
    bool time_to_horizon = false;

    const ScalarFn& at(int p, int i) const { return v[p * n_modes + i]; }
};

/// |lifted cylindrical evaluation - direct mixture formula|; zero by
/// construction up to roundoff.
double standard_reduction_check(const StandardFamily& fam, double t,
                                const DiscreteLawS& m, const ChainLaw& l);

} // namespace mfs

#endif
