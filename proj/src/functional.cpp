#include "mfs/functional.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mfs/trading.hpp"

namespace mfs {

namespace {

double time_weight(CylindricalFunctional::TimeWeight tw, double t, double horizon) {
    return tw == CylindricalFunctional::TimeWeight::One ? 1.0 : horizon - t;
}

double time_weight_dt(CylindricalFunctional::TimeWeight tw) {
    return tw == CylindricalFunctional::TimeWeight::One ? 0.0 : -1.0;
}

} // namespace

Vec CylindricalFunctional::moments(const DiscreteLawS& m) const {
    Vec v = Vec::Zero(n_moments());
    for (const auto& atom : m.atoms) {
        for (int j = 0; j < n_moments(); ++j)
            if (atom.mode == basis_[j].mode) v[j] += atom.weight * basis_[j].psi(atom.x);
    }
    return v;
}

double CylindricalFunctional::eval_moments(double t, const Vec& v, const ChainLaw& l) const {
    double out = 0.0;
    for (const auto& term : terms_) {
        double w = term.coef * time_weight(term.tw, t, horizon_);
        if (term.lstate >= 0) {
            require(term.lstate < l.size(), "chain state outside the law");
            w *= l(term.lstate);
        }
        if (w == 0.0) continue;
        double gval = 0.0;
        switch (term.shape) {
            case Shape::Affine: {
                gval = term.c0;
                for (int j = 0; j < term.lin.size() && j < v.size(); ++j)
                    gval += term.lin[j] * v[j];
                break;
            }
            case Shape::Product: gval = v[term.a] * v[term.b]; break;
            case Shape::Min: gval = std::min(v[term.a], term.threshold); break;
            case Shape::Pos: gval = std::max(v[term.a] - term.threshold, 0.0); break;
        }
        out += w * gval;
    }
    return out;
}

double CylindricalFunctional::eval(double t, const DiscreteLawS& m, const ChainLaw& l) const {
    return eval_moments(t, moments(m), l);
}

double CylindricalFunctional::time_derivative(double t, const Vec& v, const ChainLaw& l) const {
    double out = 0.0;
    for (const auto& term : terms_) {
        double w = term.coef * time_weight_dt(term.tw);
        if (w == 0.0) continue;
        if (term.lstate >= 0) w *= l(term.lstate);
        if (w == 0.0) continue;
        double gval = 0.0;
        switch (term.shape) {
            case Shape::Affine: {
                gval = term.c0;
                for (int j = 0; j < term.lin.size() && j < v.size(); ++j)
                    gval += term.lin[j] * v[j];
                break;
            }
            case Shape::Product: gval = v[term.a] * v[term.b]; break;
            case Shape::Min: gval = std::min(v[term.a], term.threshold); break;
            case Shape::Pos: gval = std::max(v[term.a] - term.threshold, 0.0); break;
        }
        out += w * gval;
    }
    return out;
}

Vec CylindricalFunctional::outer_gradient(double t, const Vec& v, int q, bool* kink) const {
    Vec g = Vec::Zero(n_moments());
    for (const auto& term : terms_) {
        if (term.lstate >= 0 && term.lstate != q) continue;
        const double w = term.coef * time_weight(term.tw, t, horizon_);
        if (w == 0.0) continue;
        switch (term.shape) {
            case Shape::Affine:
                for (int j = 0; j < term.lin.size() && j < g.size(); ++j)
                    g[j] += w * term.lin[j];
                break;
            case Shape::Product:
                g[term.a] += w * v[term.b];
                g[term.b] += w * v[term.a];
                break;
            case Shape::Min:
                // One-sided from below: the moment branch is active at the kink.
                if (v[term.a] <= term.threshold) g[term.a] += w;
                if (kink && std::abs(v[term.a] - term.threshold) <=
                                kink_tol * std::max(1.0, std::abs(term.threshold)))
                    *kink = true;
                break;
            case Shape::Pos:
                if (v[term.a] > term.threshold) g[term.a] += w;
                if (kink && std::abs(v[term.a] - term.threshold) <=
                                kink_tol * std::max(1.0, std::abs(term.threshold)))
                    *kink = true;
                break;
        }
    }
    return g;
}

Vec CylindricalFunctional::outer_gradient_law(double t, const Vec& v, const ChainLaw& l,
                                              bool* kink) const {
    Vec g = Vec::Zero(n_moments());
    for (const auto& term : terms_) {
        double w = term.coef * time_weight(term.tw, t, horizon_);
        if (term.lstate >= 0) w *= l(term.lstate);
        if (w == 0.0) continue;
        switch (term.shape) {
            case Shape::Affine:
                for (int j = 0; j < term.lin.size() && j < g.size(); ++j)
                    g[j] += w * term.lin[j];
                break;
            case Shape::Product:
                g[term.a] += w * v[term.b];
                g[term.b] += w * v[term.a];
                break;
            case Shape::Min:
                if (v[term.a] <= term.threshold) g[term.a] += w;
                if (kink && std::abs(v[term.a] - term.threshold) <=
                                kink_tol * std::max(1.0, std::abs(term.threshold)))
                    *kink = true;
                break;
            case Shape::Pos:
                if (v[term.a] > term.threshold) g[term.a] += w;
                if (kink && std::abs(v[term.a] - term.threshold) <=
                                kink_tol * std::max(1.0, std::abs(term.threshold)))
                    *kink = true;
                break;
        }
    }
    return g;
}

bool CylindricalFunctional::near_kink(const Vec& v, double tol) const {
    for (const auto& term : terms_) {
        if (term.shape != Shape::Min && term.shape != Shape::Pos) continue;
        if (std::abs(v[term.a] - term.threshold) <=
            tol * std::max(1.0, std::abs(term.threshold)))
            return true;
    }
    return false;
}

CylindricalFunctional CylindricalFunctional::linear_moment(int mode, ScalarFn psi,
                                                           double horizon, double coef,
                                                           TimeWeight tw) {
    CylindricalFunctional u({{mode, std::move(psi)}}, horizon);
    Term t;
    t.tw = tw;
    t.coef = coef;
    t.shape = Shape::Affine;
    t.lin = Vec::Ones(1);
    u.add_term(std::move(t));
    return u;
}

CylindricalFunctional CylindricalFunctional::constant(double value, double horizon) {
    CylindricalFunctional u({}, horizon);
    Term t;
    t.coef = value;
    t.shape = Shape::Affine;
    t.c0 = 1.0;
    u.add_term(std::move(t));
    return u;
}

double eval(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
            const ChainLaw& l) {
    return u.eval(t, m, l);
}

LinearDerivative linear_derivative(const CylindricalFunctional& u, double t,
                                   const DiscreteLawS& m, const Vec& x, int mode,
                                   const ChainLaw& l, int q) {
    (void)l;    // the candidate class is affine in the chain law
    LinearDerivative out;
    out.grad_x = Vec::Zero(x.size());
    out.hess_diag = Vec::Zero(x.size());
    const Vec v = u.moments(m);
    bool kink = false;
    const Vec gphi = u.outer_gradient(t, v, q, &kink);
    out.kink = kink;
    const auto& basis = u.basis();
    for (int j = 0; j < u.n_moments(); ++j) {
        if (basis[j].mode != mode || gphi[j] == 0.0) continue;
        out.value += gphi[j] * basis[j].psi(x);
        out.grad_x += gphi[j] * basis[j].psi.grad(x);
        out.hess_diag += gphi[j] * basis[j].psi.hess_diag(x);
    }
    return out;
}

double generator_L(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                   const ChainLaw& l, const CoefficientSet& coeffs, bool* kink) {
    const Vec v = u.moments(m);
    double out = u.time_derivative(t, v, l);
    const auto& basis = u.basis();
    bool k = false;

    for (int q = 0; q < l.size(); ++q) {
        if (l(q) == 0.0) continue;
        const Vec gphi = u.outer_gradient(t, v, q, &k);
        double acc = 0.0;
        for (const auto& atom : m.atoms) {
            Vec grad = Vec::Zero(atom.x.size());
            Vec hess = Vec::Zero(atom.x.size());
            bool touched = false;
            for (int j = 0; j < u.n_moments(); ++j) {
                if (basis[j].mode != atom.mode || gphi[j] == 0.0) continue;
                grad += gphi[j] * basis[j].psi.grad(atom.x);
                hess += gphi[j] * basis[j].psi.hess_diag(atom.x);
                touched = true;
            }
            if (!touched) continue;
            const Vec b = coeffs.drift_at(q, atom.x, atom.mode, m);
            const Vec s = coeffs.sigma_at(q, atom.x, atom.mode, m);
            double term = b.dot(grad);
            for (int c = 0; c < atom.x.size(); ++c) term += 0.5 * s[c] * s[c] * hess[c];
            acc += atom.weight * term;
        }
        out += l(q) * acc;
    }
    if (kink) *kink = k;
    return out;
}

double generator_Q(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                   const ChainLaw& l, const RateFunction& rf, bool* kink) {
    const Vec v = u.moments(m);
    const int n_states = rf.states;
    bool k = false;

    // delta(y; q) differs across q only through the outer gradient, so
    // precompute the per-state gradients once.
    std::vector<Vec> gphi(n_states);
    for (int q = 0; q < n_states; ++q) gphi[q] = u.outer_gradient(t, v, q, &k);
    if (kink) *kink = k;

    double out = 0.0;
    for (int p = 0; p < n_states; ++p) {
        if (l(p) == 0.0) continue;
        double acc = 0.0;
        for (const auto& atom : m.atoms) {
            // psi values reused across target states.
            double delta_p = 0.0;
            const auto& basis = u.basis();
            std::vector<double> psi_vals(u.n_moments(), 0.0);
            for (int j = 0; j < u.n_moments(); ++j)
                if (basis[j].mode == atom.mode) psi_vals[j] = basis[j].psi(atom.x);
            for (int j = 0; j < u.n_moments(); ++j) delta_p += gphi[p][j] * psi_vals[j];
            for (int q = 0; q < n_states; ++q) {
                if (q == p) continue;
                const double rate = rf.rate(p, q, atom.x);
                if (rate == 0.0) continue;
                double delta_q = 0.0;
                for (int j = 0; j < u.n_moments(); ++j)
                    delta_q += gphi[q][j] * psi_vals[j];
                acc += atom.weight * rate * (delta_q - delta_p);
            }
        }
        out += l(p) * acc;
    }
    return out;
}

namespace {

// Enumerates row-stochastic fraction vectors with entries in {0..K}/K.
void simplex_rows(int n_modes, int K, std::vector<Vec>& out) {
    Vec row = Vec::Zero(n_modes);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == n_modes - 1) {
            row[pos] = static_cast<double>(left) / K;
            out.push_back(row);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            row[pos] = static_cast<double>(k) / K;
            rec(pos + 1, left - k);
        }
    };
    rec(0, K);
}

struct KernelObjective {
    const CylindricalFunctional& u;
    double t;
    const DiscreteLawS& m;
    const ChainLaw& l;
    const CostMatrix& g;

    // Per-atom contribution tables: value moments and switch cost are both
    // linear in the row fractions.
    // moment_inc[a](j, target) = w_a * psi_j(x_a) * 1{mode_j == target}
    std::vector<Mat> moment_inc;
    std::vector<Vec> cost_row;     // cost_row[a][target] = w_a * g(mode_a, target)

    Vec base_v;

    KernelObjective(const CylindricalFunctional& u_, double t_, const DiscreteLawS& m_,
                    const ChainLaw& l_, const CostMatrix& g_)
        : u(u_), t(t_), m(m_), l(l_), g(g_) {
        const int nm = m.n_modes;
        const int J = u.n_moments();
        base_v = Vec::Zero(J);
        moment_inc.reserve(m.atoms.size());
        cost_row.reserve(m.atoms.size());
        for (const auto& atom : m.atoms) {
            Mat inc = Mat::Zero(J, nm);
            for (int j = 0; j < J; ++j) {
                const auto& b = u.basis()[j];
                const double val = atom.weight * b.psi(atom.x);
                if (val != 0.0) inc(j, b.mode) = val;
            }
            moment_inc.push_back(std::move(inc));
            Vec cr = Vec::Zero(nm);
            for (int target = 0; target < nm; ++target)
                cr[target] = atom.weight * g.cost(atom.mode, target, t, atom.x);
            cost_row.push_back(std::move(cr));
        }
    }

    /// u(t, m'; l) - cost for the kernel given by per-atom rows.
    double value(const std::vector<Vec>& rows, double* moved = nullptr) const {
        Vec v = Vec::Zero(u.n_moments());
        double cost = 0.0;
        double rel = 0.0;
        for (std::size_t a = 0; a < rows.size(); ++a) {
            const Vec& row = rows[a];
            v += moment_inc[a] * row;
            cost += cost_row[a].dot(row);
            rel += m.atoms[a].weight * (1.0 - row[m.atoms[a].mode]);
        }
        if (moved) *moved = rel;
        return u.eval_moments(t, v, l) - cost;
    }
};

} // namespace

InterventionResult intervention_value(const CylindricalFunctional& u, double t,
                                      const DiscreteLawS& m, const ChainLaw& l,
                                      const CostMatrix& g, const InterventionOptions& opts) {
    require(t < u.horizon(), "intervention_value: interventions disallowed at the horizon");
    const int nm = m.n_modes;
    const int A = static_cast<int>(m.atoms.size());
    require(A > 0, "intervention_value: empty support");

    KernelObjective obj(u, t, m, l, g);

    std::vector<Vec> menu;
    simplex_rows(nm, opts.grid, menu);
    const long per_atom = static_cast<long>(menu.size());

    InterventionResult best;
    best.value = -std::numeric_limits<double>::infinity();
    std::vector<Vec> rows(A);

    double combos = 1.0;
    for (int a = 0; a < A; ++a) combos *= static_cast<double>(per_atom);

    auto consider = [&](const std::vector<Vec>& candidate) {
        double moved = 0.0;
        const double val = obj.value(candidate, &moved);
        if (moved < opts.min_relabeled) return;     // identity excluded
        if (val > best.value) {
            best.value = val;
            best.kernel.rows = candidate;
            best.relabeled = moved;
        }
    };

    if (combos <= static_cast<double>(opts.budget)) {
        // Exhaustive product search; exact on the grid.
        std::vector<int> idx(A, 0);
        while (true) {
            for (int a = 0; a < A; ++a) rows[a] = menu[idx[a]];
            consider(rows);
            int pos = A - 1;
            while (pos >= 0 && ++idx[pos] == per_atom) idx[pos--] = 0;
            if (pos < 0) break;
        }
    } else {
        // Coordinate ascent from the identity, a few sweeps.
        for (int a = 0; a < A; ++a) {
            rows[a] = Vec::Zero(nm);
            rows[a][m.atoms[a].mode] = 1.0;
        }
        for (int sweep = 0; sweep < opts.sweeps; ++sweep) {
            for (int a = 0; a < A; ++a) {
                double local_best = -std::numeric_limits<double>::infinity();
                Vec keep = rows[a];
                Vec arg = keep;
                for (long i = 0; i < per_atom; ++i) {
                    rows[a] = menu[i];
                    double moved = 0.0;
                    const double val = obj.value(rows, &moved);
                    if (moved >= opts.min_relabeled && val > local_best) {
                        local_best = val;
                        arg = menu[i];
                    }
                }
                rows[a] = local_best > -std::numeric_limits<double>::infinity() ? arg : keep;
            }
            consider(rows);
        }
    }

    if (!std::isfinite(best.value)) {
        // Smallest admissible relabel as a fallback (can only happen for
        // extreme strictness thresholds).
        rows = InterventionKernel::identity(m).rows;
        int heavy = 0;
        for (int a = 1; a < A; ++a)
            if (m.atoms[a].weight > m.atoms[heavy].weight) heavy = a;
        rows[heavy][m.atoms[heavy].mode] -= 1.0 / opts.grid;
        rows[heavy][(m.atoms[heavy].mode + 1) % nm] += 1.0 / opts.grid;
        double moved = 0.0;
        best.value = obj.value(rows, &moved);
        best.kernel.rows = rows;
        best.relabeled = moved;
    }

    if (opts.refine && opts.grid >= 2) {
        // One local pass per atom on a K-times finer grid around the best row.
        const double step = 1.0 / (static_cast<double>(opts.grid) * opts.grid);
        rows = best.kernel.rows;
        for (int a = 0; a < A; ++a) {
            const Vec center = rows[a];
            for (int up = 0; up < nm; ++up) {
                for (int dn = 0; dn < nm; ++dn) {
                    if (up == dn) continue;
                    for (int s = -opts.grid; s <= opts.grid; ++s) {
                        if (s == 0) continue;
                        Vec cand = center;
                        const double shift = s * step;
                        cand[up] += shift;
                        cand[dn] -= shift;
                        if (cand[up] < -1e-15 || cand[up] > 1.0 + 1e-15) continue;
                        if (cand[dn] < -1e-15 || cand[dn] > 1.0 + 1e-15) continue;
                        cand[up] = std::clamp(cand[up], 0.0, 1.0);
                        cand[dn] = std::clamp(cand[dn], 0.0, 1.0);
                        rows[a] = cand;
                        double moved = 0.0;
                        const double val = obj.value(rows, &moved);
                        if (moved >= opts.min_relabeled && val > best.value) {
                            best.value = val;
                            best.kernel.rows = rows;
                            best.relabeled = moved;
                        }
                    }
                }
            }
            rows[a] = best.kernel.rows[a];
        }
    }
    return best;
}

ViResidual vi_residual(const CylindricalFunctional& u, double t, const DiscreteLawS& m,
                       const ChainLaw& l, const CoefficientSet& coeffs,
                       const RateFunction& rf, const CostMatrix& g,
                       const InterventionOptions& opts) {
    require(t < u.horizon(), "vi_residual: defined for t < horizon");
    ViResidual out;
    bool kink_l = false, kink_q = false;
    const double Lu = generator_L(u, t, m, l, coeffs, &kink_l);
    const double Qu = generator_Q(u, t, m, l, rf, &kink_q);
    const double F = aggregate_F(t, m, l, coeffs);
    out.diffusion = -(Lu + F + Qu);
    const InterventionResult mi = intervention_value(u, t, m, l, g, opts);
    out.obstacle_gap = u.eval(t, m, l) - mi.value;
    out.min = std::min(out.diffusion, out.obstacle_gap);
    out.kink = kink_l || kink_q;
    return out;
}

CoefficientSet averaged_coefficients(const TwoScaleSpec& spec, const CoefficientSet& coeffs) {
    auto rep = validate_two_scale(spec);
    require(rep.ok, "averaged_coefficients: " + rep.message);
    require(coeffs.n_states == spec.total_states(),
            "averaged_coefficients: coefficient chain size mismatch");

    const int L = spec.num_blocks();
    CoefficientSet out;
    out.n_states = L;
    out.n_modes = coeffs.n_modes;
    out.dim = coeffs.dim;
    out.horizon = coeffs.horizon;
    out.running_time_scaled = coeffs.running_time_scaled;
    out.drift.resize(L * coeffs.n_modes);
    out.sigma_diag.resize(L * coeffs.n_modes);
    out.running.resize(L * coeffs.n_modes);
    out.terminal.resize(L * coeffs.n_modes);

    for (int k = 0; k < L; ++k) {
        const ChainLaw v = stationary_distribution(spec.fast[k]);
        const int off = spec.block_offset(k);
        for (int i = 0; i < coeffs.n_modes; ++i) {
            VecCoef bbar, sbar;
            ScalarCoef fbar, hbar;
            for (int w = 0; w < spec.blocks[k]; ++w) {
                const double vw = v(w);
                const VecCoef& b = coeffs.b(off + w, i);
                if (bbar.c.size() == 0 && b.c.size() > 0) bbar.c = Vec::Zero(b.c.size());
                if (b.c.size() > 0) bbar.c += vw * b.c;
                if (b.A.size() > 0) {
                    if (bbar.A.size() == 0) bbar.A = Mat::Zero(b.A.rows(), b.A.cols());
                    bbar.A += vw * b.A;
                }
                if (b.k.size() > 0) {
                    if (bbar.k.size() == 0) {
                        bbar.k = Vec::Zero(b.k.size());
                        bbar.mom_mode = b.mom_mode;
                        bbar.mom_psi = b.mom_psi;
                    }
                    bbar.k += vw * b.k;
                }
                // sigma is averaged in square.
                const VecCoef& s = coeffs.sig(off + w, i);
                require(s.A.size() == 0 && s.k.size() == 0,
                        "averaged_coefficients: only constant diffusion averages in square");
                if (sbar.c.size() == 0 && s.c.size() > 0) sbar.c = Vec::Zero(s.c.size());
                if (s.c.size() > 0) sbar.c += vw * s.c.cwiseProduct(s.c);

                const ScalarCoef& f = coeffs.running[(off + w) * coeffs.n_modes + i];
                require(f.in_x.kind() == ScalarFn::Kind::Constant || spec.blocks[k] == 1,
                        "averaged_coefficients: x-dependent f requires singleton blocks");
                fbar.c += vw * (f.c + f.in_x(Vec::Zero(coeffs.dim)));
                if (f.k != 0.0) {
                    fbar.k += vw * f.k;
                    fbar.mom_mode = f.mom_mode;
                    fbar.mom_psi = f.mom_psi;
                }
                const ScalarCoef& h = coeffs.terminal[(off + w) * coeffs.n_modes + i];
                hbar.c += vw * (h.c + h.in_x(Vec::Zero(coeffs.dim)));
                if (h.k != 0.0) {
                    hbar.k += vw * h.k;
                    hbar.mom_mode = h.mom_mode;
                    hbar.mom_psi = h.mom_psi;
                }
            }
            if (sbar.c.size() > 0) sbar.c = sbar.c.cwiseSqrt();
            out.drift[k * coeffs.n_modes + i] = std::move(bbar);
            out.sigma_diag[k * coeffs.n_modes + i] = std::move(sbar);
            out.running[k * coeffs.n_modes + i] = std::move(fbar);
            out.terminal[k * coeffs.n_modes + i] = std::move(hbar);
        }
    }
    // The trading family averages onto its own limit: block thresholds and
    // the aggregated chain.
    if (coeffs.trading_f) {
        require(coeffs.trading_f->states == spec.total_states() &&
                    coeffs.trading_f->states == 4,
                "averaged_coefficients: the trading family only averages from the "
                "four-state layout");
        out.trading_f =
            std::make_shared<TradingExampleSpec>(limit_reduction(*coeffs.trading_f));
    }
    return out;
}

ViResidual limit_vi_residual(const CylindricalFunctional& u, double t,
                             const DiscreteLawS& m, const ChainLaw& l_bar,
                             const TwoScaleSpec& spec, const CoefficientSet& coeffs,
                             const CostMatrix& g, const InterventionOptions& opts) {
    require(l_bar.size() == spec.num_blocks(),
            "limit_vi_residual: law must live on the block states");
    const CoefficientSet avg = averaged_coefficients(spec, coeffs);
    const GeneratorMatrix qbar = averaged_generator(spec);
    const RateFunction rf = RateFunction::constants(qbar);
    return vi_residual(u, t, m, l_bar, avg, rf, g, opts);
}

double standard_reduction_check(const StandardFamily& fam, double t, const DiscreteLawS& m,
                                const ChainLaw& l) {
    require(l.size() == fam.n_states, "standard_reduction_check: law size mismatch");

    // Lifted candidate: one moment per (state, mode) with an l(p)-weighted
    // affine outer map.
    std::vector<CylindricalFunctional::MomentBasis> basis;
    for (int p = 0; p < fam.n_states; ++p)
        for (int i = 0; i < fam.n_modes; ++i) basis.push_back({i, fam.at(p, i)});
    CylindricalFunctional lifted(std::move(basis), fam.horizon);
    for (int p = 0; p < fam.n_states; ++p) {
        CylindricalFunctional::Term term;
        term.tw = fam.time_to_horizon ? CylindricalFunctional::TimeWeight::ToHorizon
                                      : CylindricalFunctional::TimeWeight::One;
        term.lstate = p;
        term.shape = CylindricalFunctional::Shape::Affine;
        term.lin = Vec::Zero(fam.n_states * fam.n_modes);
        for (int i = 0; i < fam.n_modes; ++i) term.lin[p * fam.n_modes + i] = 1.0;
        lifted.add_term(std::move(term));
    }
    const double lifted_value = lifted.eval(t, m, l);

    // Direct mixture formula.
    const double tau = fam.time_to_horizon ? fam.horizon - t : 1.0;
    double direct = 0.0;
    for (int p = 0; p < fam.n_states; ++p) {
        if (l(p) == 0.0) continue;
        double inner = 0.0;
        for (const auto& atom : m.atoms) inner += atom.weight * fam.at(p, atom.mode)(atom.x);
        direct += l(p) * tau * inner;
    }
    return std::abs(lifted_value - direct);
}

} // namespace mfs
