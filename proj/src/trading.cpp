#include "mfs/trading.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfs {

namespace {

double pos(double x) { return x > 0.0 ? x : 0.0; }

} // namespace

GeneratorMatrix TradingExampleSpec::generator() const {
    if (states == 2) return GeneratorMatrix::two_state(mu1, mu2);
    return build_epsilon_generator(two_scale());
}

TwoScaleSpec TradingExampleSpec::two_scale() const {
    require(states == 4, "two_scale: only the four-state layout has one");
    TwoScaleSpec spec;
    spec.blocks = {2, 2};
    spec.fast = {GeneratorMatrix::two_state(lam1, lam2),
                 GeneratorMatrix::two_state(lam1, lam2)};
    Mat slow = Mat::Zero(4, 4);
    // Primary trend flips block <-> block, preserving the secondary indicator.
    slow(0, 2) = mu1; slow(0, 0) = -mu1;
    slow(1, 3) = mu1; slow(1, 1) = -mu1;
    slow(2, 0) = mu2; slow(2, 2) = -mu2;
    slow(3, 1) = mu2; slow(3, 3) = -mu2;
    spec.slow = GeneratorMatrix(std::move(slow));
    spec.epsilon = epsilon;
    return spec;
}

ValidationReport TradingExampleSpec::validate() const {
    if (states != 2 && states != 4)
        return ValidationReport::fail("states must be 2 or 4");
    if (static_cast<int>(a1.size()) != states || static_cast<int>(a0.size()) != states)
        return ValidationReport::fail("one threshold pair required per chain state");
    for (int q = 0; q < states; ++q)
        if (!(a1[q] > 0.0) || !(a0[q] > 0.0))
            return ValidationReport::fail("thresholds must be positive");
    if (!(mu1 > 0.0) || !(mu2 > 0.0))
        return ValidationReport::fail("chain rates must be positive");
    if (states == 2) {
        if (!(a1[1] > a1[0]))
            return ValidationReport::fail("ordering a1(2) > a1(1) violated");
        if (!(a0[1] < a0[0]))
            return ValidationReport::fail("ordering a0(2) < a0(1) violated");
    } else {
        if (!(lam1 > 0.0) || !(lam2 > 0.0) || !(epsilon > 0.0))
            return ValidationReport::fail("fast rates and epsilon must be positive");
        // States ordered (1,1), (1,2), (2,1), (2,2); thresholds ordered by
        // increasing market optimism, ties allowed.
        for (int q = 0; q + 1 < 4; ++q) {
            if (a1[q] > a1[q + 1] + 1e-15)
                return ValidationReport::fail("long thresholds must be nondecreasing in q");
            if (a0[q] < a0[q + 1] - 1e-15)
                return ValidationReport::fail("short thresholds must be nonincreasing in q");
        }
    }
    if (!(horizon > 0.0)) return ValidationReport::fail("horizon must be positive");
    return ValidationReport::pass();
}

double example_value(const TradingExampleSpec& spec, double t, const DiscreteLawS& m,
                     const ChainLaw& l) {
    require(t <= spec.horizon, "example_value: t beyond horizon");
    require(l.size() == spec.states, "example_value: chain law size mismatch");
    const double v1 = mode_moment(m, 1, spec.psi);
    const double v0 = mode_moment(m, 0, spec.psi);
    double s = 0.0;
    for (int q = 0; q < spec.states; ++q)
        s += l(q) * (std::min(v1, spec.a1[q]) + std::min(v0, spec.a0[q]));
    return (spec.horizon - t) * s;
}

ViResidual example_residual(const TradingExampleSpec& spec, double t,
                            const DiscreteLawS& m, const ChainLaw& l) {
    require(t < spec.horizon, "example_residual: defined for t < horizon");
    const double v1 = mode_moment(m, 1, spec.psi);
    const double v0 = mode_moment(m, 0, spec.psi);

    ViResidual out;
    for (int q = 0; q < spec.states; ++q)
        out.diffusion += l(q) * (pos(v1 - spec.a1[q]) + pos(v0 - spec.a0[q]));

    // Obstacle gap by exact one-dimensional optimization: a relabeling moves
    // psi-mass between the modes, so the reachable moments are
    // (y, s - y), y in [0, s], at cost (T - t) |y - v1|. The objective is
    // piecewise linear and concave; the maximum sits on a breakpoint.
    const double s = v1 + v0;
    const double theta = spec.horizon - t;
    auto phi = [&](double y) {
        double val = 0.0;
        for (int q = 0; q < spec.states; ++q)
            val += l(q) * (std::min(y, spec.a1[q]) + std::min(s - y, spec.a0[q]));
        return val - std::abs(y - v1);
    };
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> breaks = {0.0, s, v1};
    for (int q = 0; q < spec.states; ++q) {
        breaks.push_back(spec.a1[q]);
        breaks.push_back(s - spec.a0[q]);
    }
    for (double y : breaks)
        if (y >= 0.0 && y <= s) best = std::max(best, phi(y));
    const double u_now = example_value(spec, t, m, l);
    out.obstacle_gap = u_now - theta * best;
    out.min = std::min(out.diffusion, out.obstacle_gap);
    return out;
}

ActionReport classify_action(const TradingExampleSpec& spec, const DiscreteLawS& m, int q) {
    require(q >= 0 && q < spec.states, "classify_action: chain state out of range");
    ActionReport rep;
    rep.chain_state = q;
    const double v1 = mode_moment(m, 1, spec.psi);
    const double v0 = mode_moment(m, 0, spec.psi);
    // Strict inequality: boundary points keep the current book.
    if (v1 > spec.a1[q]) {
        rep.long_action = ModeAction::SwitchOut;
        rep.long_target = spec.a1[q];
    } else {
        rep.long_target = v1;
    }
    if (v0 > spec.a0[q]) {
        rep.short_action = ModeAction::SwitchOut;
        rep.short_target = spec.a0[q];
    } else {
        rep.short_target = v0;
    }
    return rep;
}

std::vector<ActionReport> classify_action(const TradingExampleSpec& spec,
                                          const DiscreteLawS& m, const ChainLaw& l) {
    std::vector<ActionReport> out;
    for (int q = 0; q < spec.states; ++q) {
        ActionReport rep = classify_action(spec, m, q);
        rep.weight = l(q);
        out.push_back(rep);
    }
    return out;
}

StrategyTable strategy_table(const TradingExampleSpec& spec,
                             const std::vector<double>& v1_grid,
                             const std::vector<double>& v0_grid) {
    require(!v1_grid.empty() && !v0_grid.empty(), "strategy_table: empty grid");
    StrategyTable table;
    table.long_boundaries = spec.a1;
    table.short_boundaries = spec.a0;
    table.cells.reserve(v1_grid.size() * v0_grid.size() * spec.states);
    for (double v1 : v1_grid) {
        for (double v0 : v0_grid) {
            for (int q = 0; q < spec.states; ++q) {
                StrategyCell cell;
                cell.v1 = v1;
                cell.v0 = v0;
                cell.chain_state = q;
                cell.long_action =
                    v1 > spec.a1[q] ? ModeAction::SwitchOut : ModeAction::Keep;
                cell.short_action =
                    v0 > spec.a0[q] ? ModeAction::SwitchOut : ModeAction::Keep;
                table.cells.push_back(cell);
            }
        }
    }
    return table;
}

TradingExampleSpec limit_reduction(const TradingExampleSpec& four_state) {
    require(four_state.states == 4, "limit_reduction: four-state spec required");
    auto rep = four_state.validate();
    require(rep.ok, "limit_reduction: " + rep.message);
    for (int k = 0; k < 2; ++k) {
        if (std::abs(four_state.a1[2 * k] - four_state.a1[2 * k + 1]) > 1e-12 ||
            std::abs(four_state.a0[2 * k] - four_state.a0[2 * k + 1]) > 1e-12)
            throw InvalidArgument(
                "limit_reduction: thresholds are not block-constant and no collapsing "
                "rule is configured");
    }
    TradingExampleSpec two;
    two.horizon = four_state.horizon;
    two.psi = four_state.psi;
    two.states = 2;
    two.sigma = four_state.sigma;
    two.a1 = {four_state.a1[0], four_state.a1[2]};
    two.a0 = {four_state.a0[0], four_state.a0[2]};

    // Chain of the limit problem comes from the aggregated generator.
    const GeneratorMatrix qbar = averaged_generator(four_state.two_scale());
    two.mu1 = qbar(0, 1);
    two.mu2 = qbar(1, 0);
    return two;
}

CylindricalFunctional trading_functional(const TradingExampleSpec& spec) {
    CylindricalFunctional u({{1, spec.psi}, {0, spec.psi}}, spec.horizon);
    for (int q = 0; q < spec.states; ++q) {
        CylindricalFunctional::Term t1;
        t1.tw = CylindricalFunctional::TimeWeight::ToHorizon;
        t1.lstate = q;
        t1.shape = CylindricalFunctional::Shape::Min;
        t1.a = 0;
        t1.threshold = spec.a1[q];
        u.add_term(std::move(t1));

        CylindricalFunctional::Term t0;
        t0.tw = CylindricalFunctional::TimeWeight::ToHorizon;
        t0.lstate = q;
        t0.shape = CylindricalFunctional::Shape::Min;
        t0.a = 1;
        t0.threshold = spec.a0[q];
        u.add_term(std::move(t0));
    }
    return u;
}

double trading_running_reward(const TradingExampleSpec& spec, double t, int q,
                              const DiscreteLawS& m) {
    const double v1 = mode_moment(m, 1, spec.psi);
    const double v0 = mode_moment(m, 0, spec.psi);
    double f = spec.a1[q] + spec.a0[q] - std::abs(v1 - spec.a1[q]) -
               std::abs(v0 - spec.a0[q]);

    // Correction cancelling the drift term and the slow part of the jump
    // generator of the candidate, so that the diffusion residual reduces to
    // the positive-part formula. The fast part of the four-state layout is
    // deliberately not cancelled.
    const double theta = spec.horizon - t;
    const double mu_q = spec.primary_of(q) == 0 ? spec.mu1 : spec.mu2;
    const double m1 = m.mode_mass(1);
    const double m0 = m.mode_mass(0);
    const double ind1_q = v1 <= spec.a1[q] ? 1.0 : 0.0;
    const double ind0_q = v0 <= spec.a0[q] ? 1.0 : 0.0;
    double corr = mu_q * (ind1_q * m1 + ind0_q * m0);

    auto delta_int = [&](int qa, int qb) {
        // integral of [delta u(.; qa) - delta u(.; qb)] against m, divided by theta
        const double i1a = v1 <= spec.a1[qa] ? 1.0 : 0.0;
        const double i0a = v0 <= spec.a0[qa] ? 1.0 : 0.0;
        const double i1b = v1 <= spec.a1[qb] ? 1.0 : 0.0;
        const double i0b = v0 <= spec.a0[qb] ? 1.0 : 0.0;
        return (i1a - i1b) * v1 + (i0a - i0b) * v0;
    };
    if (spec.states == 2) {
        // Q u = (mu1 l(0) - mu2 l(1)) * [delta(1) - delta(0)]-integral.
        corr += (q == 0 ? spec.mu1 : -spec.mu2) * delta_int(1, 0);
    } else {
        // Slow transitions 0<->2 and 1<->3 at (mu1, mu2).
        if (q == 0) corr += spec.mu1 * delta_int(2, 0);
        if (q == 2) corr += -spec.mu2 * delta_int(2, 0);
        if (q == 1) corr += spec.mu1 * delta_int(3, 1);
        if (q == 3) corr += -spec.mu2 * delta_int(3, 1);
    }
    return f - theta * corr;
}

CoefficientSet trading_coefficients(const TradingExampleSpec& spec) {
    auto rep = spec.validate();
    require(rep.ok, "trading_coefficients: " + rep.message);
    CoefficientSet out;
    out.n_states = spec.states;
    out.n_modes = 2;
    out.dim = 1;
    out.horizon = spec.horizon;
    out.drift.resize(spec.states * 2);
    out.sigma_diag.resize(spec.states * 2);
    out.running.resize(spec.states * 2);
    out.terminal.resize(spec.states * 2);
    for (int q = 0; q < spec.states; ++q) {
        const double mu_q = spec.primary_of(q) == 0 ? spec.mu1 : spec.mu2;
        for (int i = 0; i < 2; ++i) {
            out.drift[q * 2 + i] = VecCoef::constant(Vec::Constant(1, mu_q));
            out.sigma_diag[q * 2 + i] = VecCoef::constant(Vec::Constant(1, spec.sigma));
            out.terminal[q * 2 + i] = ScalarCoef::constant(0.0);
        }
    }
    out.trading_f = std::make_shared<TradingExampleSpec>(spec);
    return out;
}

CostMatrix trading_costs(const TradingExampleSpec& spec) {
    return CostMatrix::separable_to_horizon(2, spec.horizon, spec.psi);
}

RateFunction trading_rates(const TradingExampleSpec& spec) {
    return RateFunction::constants(spec.generator());
}

ValidationReport check_drift_premise(const TradingExampleSpec& spec,
                                     const CoefficientSet& coeffs, double lo, double hi,
                                     double tol) {
    // L^{i,q} psi(x) = b . grad psi + (1/2) sigma^2 : hess psi must equal the
    // primary-trend rate everywhere on the configured box.
    DiscreteLawS probe = DiscreteLawS::point(Vec::Constant(1, 0.5 * (lo + hi)), 0, 2);
    for (int q = 0; q < spec.states; ++q) {
        const double mu_q = spec.primary_of(q) == 0 ? spec.mu1 : spec.mu2;
        for (int i = 0; i < 2; ++i) {
            for (int k = 0; k <= 20; ++k) {
                Vec x = Vec::Constant(1, lo + (hi - lo) * k / 20.0);
                const Vec b = coeffs.drift_at(q, x, i, probe);
                const Vec s = coeffs.sigma_at(q, x, i, probe);
                const Vec grad = spec.psi.grad(x);
                const Vec hess = spec.psi.hess_diag(x);
                double lpsi = b.dot(grad);
                for (int c = 0; c < x.size(); ++c) lpsi += 0.5 * s[c] * s[c] * hess[c];
                if (std::abs(lpsi - mu_q) > tol) {
                    std::ostringstream os;
                    os << "generator applied to psi is " << lpsi << " != " << mu_q
                       << " at x=" << x[0] << " (q=" << q << ", i=" << i << ")";
                    return ValidationReport::fail(os.str());
                }
                if (!(spec.psi(x) > 0.0)) {
                    std::ostringstream os;
                    os << "psi is not positive at x=" << x[0];
                    return ValidationReport::fail(os.str());
                }
            }
        }
    }
    return ValidationReport::pass();
}

std::string to_string(ModeAction a) {
    return a == ModeAction::Keep ? "keep" : "switch-out";
}

} // namespace mfs
