#include "mfs/model.hpp"

#include <cmath>
#include <sstream>

#include "mfs/trading.hpp"

namespace mfs {

Vec VecCoef::eval(const Vec& x, const DiscreteLawS& m) const {
    Vec out = c.size() > 0 ? c : Vec::Zero(x.size());
    if (A.size() > 0) out += A * x;
    if (k.size() > 0) {
        double mom = 0.0;
        for (const auto& atom : m.atoms)
            if (mom_mode < 0 || atom.mode == mom_mode)
                mom += atom.weight * mom_psi(atom.x);
        out += k * mom;
    }
    return out;
}

double ScalarCoef::eval(const Vec& x, const DiscreteLawS& m) const {
    double out = c + in_x(x);
    if (k != 0.0) {
        double mom = 0.0;
        for (const auto& atom : m.atoms)
            if (mom_mode < 0 || atom.mode == mom_mode)
                mom += atom.weight * mom_psi(atom.x);
        out += k * mom;
    }
    return out;
}

Vec CoefficientSet::drift_at(int q, const Vec& x, int i, const DiscreteLawS& m) const {
    return b(q, i).eval(x, m);
}

Vec CoefficientSet::sigma_at(int q, const Vec& x, int i, const DiscreteLawS& m) const {
    return sig(q, i).eval(x, m);
}

double CoefficientSet::f_at(double t, int q, const Vec& x, int i,
                            const DiscreteLawS& m) const {
    if (trading_f) return trading_running_reward(*trading_f, t, q, m);
    double v = running[q * n_modes + i].eval(x, m);
    if (running_time_scaled) v *= (horizon - t);
    return v;
}

double CoefficientSet::h_at(int q, const Vec& x, int i, const DiscreteLawS& m) const {
    return terminal[q * n_modes + i].eval(x, m);
}

namespace {

double entry_moment(const DiscreteLawS& m, int mom_mode, const ScalarFn& psi) {
    double mom = 0.0;
    for (const auto& atom : m.atoms)
        if (mom_mode < 0 || atom.mode == mom_mode) mom += atom.weight * psi(atom.x);
    return mom;
}

} // namespace

CoeffCache::CoeffCache(const CoefficientSet& cs, double t, const DiscreteLawS& m)
    : cs_(cs), t_(t) {
    const int E = cs.n_states * cs.n_modes;
    drift_mom_.assign(E, 0.0);
    sigma_mom_.assign(E, 0.0);
    f_mom_.assign(E, 0.0);
    h_mom_.assign(E, 0.0);
    for (int e = 0; e < E; ++e) {
        if (cs.drift[e].k.size() > 0)
            drift_mom_[e] = entry_moment(m, cs.drift[e].mom_mode, cs.drift[e].mom_psi);
        if (cs.sigma_diag[e].k.size() > 0)
            sigma_mom_[e] =
                entry_moment(m, cs.sigma_diag[e].mom_mode, cs.sigma_diag[e].mom_psi);
        if (!cs.trading_f && cs.running[e].k != 0.0)
            f_mom_[e] = entry_moment(m, cs.running[e].mom_mode, cs.running[e].mom_psi);
        if (cs.terminal[e].k != 0.0)
            h_mom_[e] = entry_moment(m, cs.terminal[e].mom_mode, cs.terminal[e].mom_psi);
    }
    if (cs.trading_f) {
        trading_f_.resize(cs.n_states);
        for (int q = 0; q < cs.n_states; ++q)
            trading_f_[q] = trading_running_reward(*cs.trading_f, t, q, m);
    }
}

Vec CoeffCache::drift(int q, const Vec& x, int i) const {
    const VecCoef& b = cs_.b(q, i);
    Vec out = b.c.size() > 0 ? b.c : Vec::Zero(x.size());
    if (b.A.size() > 0) out += b.A * x;
    if (b.k.size() > 0) out += b.k * drift_mom_[q * cs_.n_modes + i];
    return out;
}

Vec CoeffCache::sigma(int q, const Vec& x, int i) const {
    const VecCoef& s = cs_.sig(q, i);
    Vec out = s.c.size() > 0 ? s.c : Vec::Zero(x.size());
    if (s.A.size() > 0) out += s.A * x;
    if (s.k.size() > 0) out += s.k * sigma_mom_[q * cs_.n_modes + i];
    return out;
}

double CoeffCache::f(int q, const Vec& x, int i) const {
    if (!trading_f_.empty()) return trading_f_[q];
    const ScalarCoef& f = cs_.running[q * cs_.n_modes + i];
    double v = f.c + f.in_x(x) + f.k * f_mom_[q * cs_.n_modes + i];
    if (cs_.running_time_scaled) v *= (cs_.horizon - t_);
    return v;
}

double CoeffCache::h(int q, const Vec& x, int i) const {
    const ScalarCoef& h = cs_.terminal[q * cs_.n_modes + i];
    return h.c + h.in_x(x) + h.k * h_mom_[q * cs_.n_modes + i];
}

CostMatrix CostMatrix::constant(int n_modes, double value) {
    CostMatrix g;
    g.n_modes = n_modes;
    g.entries.resize(n_modes * n_modes);
    for (int i = 0; i < n_modes; ++i)
        for (int j = 0; j < n_modes; ++j)
            if (i != j) g.entries[i * n_modes + j] = {value, false, ScalarFn::constant(1.0)};
    return g;
}

CostMatrix CostMatrix::separable_to_horizon(int n_modes, double horizon, ScalarFn psi) {
    CostMatrix g;
    g.n_modes = n_modes;
    g.horizon = horizon;
    g.entries.resize(n_modes * n_modes);
    for (int i = 0; i < n_modes; ++i)
        for (int j = 0; j < n_modes; ++j)
            if (i != j) g.entries[i * n_modes + j] = {1.0, true, psi};
    return g;
}

double CostMatrix::cost(int i, int j, double t, const Vec& x) const {
    if (i == j) return 0.0;
    const Entry& e = entries[i * n_modes + j];
    double v = e.scale * e.psi(x);
    if (e.time_to_horizon) v *= (horizon - t);
    return v;
}

ValidationReport validate_costs(const CostMatrix& g, const std::vector<double>& t_grid,
                                const std::vector<Vec>& x_sample) {
    require(!t_grid.empty() && !x_sample.empty(), "validate_costs: empty sampling grid");
    const int n = g.n_modes;
    for (double t : t_grid) {
        for (const Vec& x : x_sample) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (i == j) continue;
                    // No free switching: strictness with i = k reduces to
                    // positivity of each leg.
                    if (!(g.cost(i, j, t, x) > 0.0)) {
                        std::ostringstream os;
                        os << "nonpositive cost g(" << i << "," << j << ") at t=" << t;
                        return ValidationReport::fail(os.str());
                    }
                    for (int k = 0; k < n; ++k) {
                        if (k == i || k == j) continue;
                        const double lhs = g.cost(i, j, t, x) + g.cost(j, k, t, x);
                        const double rhs = g.cost(i, k, t, x);
                        if (!(lhs > rhs)) {
                            std::ostringstream os;
                            os << "triangle condition fails at (i,j,k)=(" << i << "," << j
                               << "," << k << "), t=" << t << ": " << lhs
                               << " <= " << rhs;
                            return ValidationReport::fail(os.str());
                        }
                    }
                }
            }
        }
    }
    return ValidationReport::pass();
}

std::vector<double> default_time_grid(double horizon) {
    // Sampled on [0, T): switching exactly at the horizon is disallowed and
    // the separable costs may degenerate there.
    std::vector<double> out;
    const int n = 11;
    for (int k = 0; k < n; ++k) out.push_back(horizon * k / n);
    return out;
}

std::vector<Vec> default_x_grid(double lo, double hi, int dim) {
    std::vector<Vec> out;
    const int n = 21;
    if (dim == 1) {
        for (int k = 0; k < n; ++k) {
            Vec x(1);
            x[0] = lo + (hi - lo) * k / (n - 1);
            out.push_back(x);
        }
    } else {
        // Axis sweeps through the box center keep the sample size linear in d.
        Vec center = Vec::Constant(dim, 0.5 * (lo + hi));
        for (int axis = 0; axis < dim; ++axis) {
            for (int k = 0; k < n; ++k) {
                Vec x = center;
                x[axis] = lo + (hi - lo) * k / (n - 1);
                out.push_back(x);
            }
        }
    }
    return out;
}

double aggregate_F(double t, const DiscreteLawS& m, const ChainLaw& l,
                   const CoefficientSet& coeffs) {
    double out = 0.0;
    for (int q = 0; q < l.size(); ++q) {
        if (l(q) == 0.0) continue;
        double inner = 0.0;
        for (const auto& atom : m.atoms)
            inner += atom.weight * coeffs.f_at(t, q, atom.x, atom.mode, m);
        out += l(q) * inner;
    }
    return out;
}

double aggregate_H(const DiscreteLawS& m, const ChainLaw& l, const CoefficientSet& coeffs) {
    double out = 0.0;
    for (int q = 0; q < l.size(); ++q) {
        if (l(q) == 0.0) continue;
        double inner = 0.0;
        for (const auto& atom : m.atoms)
            inner += atom.weight * coeffs.h_at(q, atom.x, atom.mode, m);
        out += l(q) * inner;
    }
    return out;
}

double switch_cost(const DiscreteLawS& m, const InterventionKernel& k, double t,
                   const CostMatrix& g) {
    auto rep = validate_kernel(k, m);
    require(rep.ok, "switch_cost: " + rep.message);
    double out = 0.0;
    for (std::size_t a = 0; a < m.atoms.size(); ++a) {
        const auto& atom = m.atoms[a];
        for (int j = 0; j < m.n_modes; ++j) {
            if (j == atom.mode) continue;
            const double p = k.rows[a][j];
            if (p > 0.0) out += atom.weight * p * g.cost(atom.mode, j, t, atom.x);
        }
    }
    return out;
}

SwitchRecord make_switch_record(const DiscreteLawS& m, const InterventionKernel& k,
                                int ordinal) {
    auto rep = validate_kernel(k, m);
    require(rep.ok, "make_switch_record: " + rep.message);
    SwitchRecord rec;
    rec.ordinal = ordinal;
    rec.prior = Vec::Zero(m.n_modes);
    rec.conditional.assign(m.n_modes, DiscreteLawS{});
    for (auto& c : rec.conditional) c.n_modes = m.n_modes;

    for (int i = 0; i < m.n_modes; ++i) rec.prior[i] = m.mode_mass(i);
    for (std::size_t a = 0; a < m.atoms.size(); ++a) {
        const auto& atom = m.atoms[a];
        if (atom.weight <= 0.0 || rec.prior[atom.mode] <= 0.0) continue;
        for (int j = 0; j < m.n_modes; ++j) {
            const double p = k.rows[a][j];
            if (p <= 0.0) continue;
            rec.conditional[atom.mode].atoms.push_back(
                {atom.x, j, atom.weight * p / rec.prior[atom.mode]});
        }
    }
    for (auto& c : rec.conditional) c = c.compacted();
    return rec;
}

double aggregate_G(double t, const SwitchRecord& rec, const CostMatrix& g) {
    double out = 0.0;
    for (int i = 0; i < rec.prior.size(); ++i) {
        if (rec.prior[i] <= 0.0) continue;
        double inner = 0.0;
        for (const auto& atom : rec.conditional[i].atoms)
            inner += atom.weight * g.cost(i, atom.mode, t, atom.x);
        out += rec.prior[i] * inner;
    }
    return out;
}

} // namespace mfs
