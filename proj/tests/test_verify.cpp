#include <doctest.h>

#include <cmath>

#include "mfs/rng.hpp"
#include "mfs/verify.hpp"
#include "oracles/dpp_memo.hpp"

using namespace mfs;

namespace {

CoefficientSet drift_coeffs(double drift, double sigma) {
    CoefficientSet cs;
    cs.n_states = 2;
    cs.n_modes = 2;
    cs.dim = 1;
    cs.horizon = 1.0;
    cs.drift.assign(4, VecCoef::constant(Vec::Constant(1, drift)));
    cs.sigma_diag.assign(4, VecCoef::constant(Vec::Constant(1, sigma)));
    cs.running.assign(4, ScalarCoef::constant(0.0));
    cs.terminal.assign(4, ScalarCoef::constant(0.0));
    return cs;
}

SimulationSpec flow_spec(const CoefficientSet& cs, int particles, double dt,
                         std::uint64_t seed) {
    SimulationSpec spec;
    spec.coeffs = cs;
    spec.rates = RateFunction::constants(GeneratorMatrix::two_state(1.0, 2.0));
    spec.costs = CostMatrix::constant(2, 1.0);
    spec.policy = SwitchPolicy::none();
    spec.m0 = DiscreteLawS::point(Vec::Constant(1, 1.0), 1, 2);
    spec.l0 = ChainLaw::uniform(2);
    spec.particles = particles;
    spec.dt = dt;
    spec.horizon = 1.0;
    spec.seed = seed;
    return spec;
}

DiscreteInstance tiny_instance(Rng& rng, int atoms, int steps) {
    DiscreteInstance inst;
    for (int g = 0; g < atoms; ++g)
        inst.x_grid.push_back(Vec::Constant(1, g + 0.5 + 0.2 * rng.uniform()));
    inst.n_modes = 2;
    inst.n_states = 2;
    inst.steps = steps;
    inst.dt = 0.25;

    auto random_stochastic = [&](int n) {
        Mat m(n, n);
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int c = 0; c < n; ++c) {
                m(r, c) = 0.1 + rng.uniform();
                s += m(r, c);
            }
            for (int c = 0; c < n; ++c) m(r, c) /= s;
        }
        return m;
    };
    for (int k = 0; k < inst.n_modes * inst.n_states; ++k)
        inst.x_step.push_back(random_stochastic(static_cast<int>(inst.x_grid.size())));
    inst.chain_step = random_stochastic(2);

    // Rows are cell-ordered (x major, mode minor).
    DiscreteInstance::Action ident;
    for (int xi = 0; xi < static_cast<int>(inst.x_grid.size()); ++xi)
        for (int i = 0; i < 2; ++i) {
            Vec row = Vec::Zero(2);
            row[i] = 1.0;
            ident.rows.push_back(row);
        }
    inst.actions.push_back(ident);
    for (double frac : {0.5, 1.0})
        for (int c = 0; c < inst.cells(); ++c) {
            DiscreteInstance::Action a = ident;
            const int mode = c % inst.n_modes;
            Vec row = Vec::Zero(2);
            row[mode] = 1.0 - frac;
            row[1 - mode] = frac;
            a.rows[c] = row;
            inst.actions.push_back(a);
        }

    inst.costs = CostMatrix::constant(2, 0.05 + 0.2 * rng.uniform());
    inst.f_table.resize(inst.steps * 2 * inst.cells());
    for (auto& v : inst.f_table) v = rng.uniform();
    inst.h_table.resize(2 * inst.cells());
    for (auto& v : inst.h_table) v = rng.uniform();
    return inst;
}

InstanceLaw random_instance_law(const DiscreteInstance& inst, Rng& rng) {
    InstanceLaw law;
    law.weights = Vec::Zero(inst.cells() * inst.n_states);
    for (int k = 0; k < law.weights.size(); ++k) law.weights[k] = 0.05 + rng.uniform();
    law.weights /= law.weights.sum();
    return law;
}

} // namespace

TEST_CASE("change-of-variables identity on empirical flows") {
    SUBCASE("constant candidate: every term vanishes") {
        const SimulationSpec spec = flow_spec(drift_coeffs(0.3, 0.0), 200, 0.01, 4);
        const EnsembleFlow flow = simulate(spec);
        const CylindricalFunctional u = CylindricalFunctional::constant(2.0, 1.0);
        const ItoReport rep = ito_check(u, flow, spec.coeffs, spec.rates);
        CHECK(rep.lhs == doctest::Approx(0.0));
        CHECK(rep.rhs == doctest::Approx(0.0));
        CHECK(rep.ok);
    }
    SUBCASE("linear moment under pure drift closes to O(dt)") {
        const double mu = 0.8;
        const SimulationSpec spec = flow_spec(drift_coeffs(mu, 0.0), 100, 0.01, 4);
        const EnsembleFlow flow = simulate(spec);
        const CylindricalFunctional u =
            CylindricalFunctional::linear_moment(1, ScalarFn::coordinate(), 1.0);
        const ItoReport rep = ito_check(u, flow, spec.coeffs, spec.rates);
        CHECK(rep.lhs == doctest::Approx(mu).epsilon(1e-12));
        CHECK(rep.residual <= 2.0 * 0.01 * mu + 1e-12);
    }
    SUBCASE("quadratic moment under pure noise needs the half factor") {
        const SimulationSpec spec = flow_spec(drift_coeffs(0.0, 1.0), 20000, 1e-3, 8);
        const EnsembleFlow flow = simulate(spec);
        const CylindricalFunctional u = CylindricalFunctional::linear_moment(
            1, ScalarFn::quadratic(0.0, Vec::Zero(1), Vec::Ones(1)), 1.0);
        const ItoReport rep = ito_check(u, flow, spec.coeffs, spec.rates);
        // drift-diffusion term integrates (1/2) sigma^2 * 2 = 1 per unit time.
        CHECK(rep.drift_diffusion_term == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(rep.residual <= 0.05);
    }
    SUBCASE("forced full-mass switch books its jump exactly") {
        SimulationSpec spec = flow_spec(drift_coeffs(0.2, 0.0), 150, 0.01, 12);
        SwitchPolicy policy;
        policy.kind = SwitchPolicy::Kind::KernelSequence;
        SwitchPolicy::TimedKernel tk;
        tk.time = 0.5;
        tk.row_per_mode = {Vec::Zero(2), Vec::Zero(2)};
        tk.row_per_mode[0][0] = 1.0;
        tk.row_per_mode[1][0] = 1.0;
        policy.kernels.push_back(tk);
        spec.policy = policy;
        const EnsembleFlow flow = simulate(spec);
        REQUIRE(flow.jumps.size() == 1);

        const CylindricalFunctional u =
            CylindricalFunctional::linear_moment(1, ScalarFn::coordinate(), 1.0);
        const ItoReport rep = ito_check(u, flow, spec.coeffs, spec.rates);
        const double expected_jump = u.eval(0.5, flow.jumps[0].after, ChainLaw::uniform(2)) -
                                     u.eval(0.5, flow.jumps[0].before, ChainLaw::uniform(2));
        CHECK(rep.measure_jump_term == doctest::Approx(expected_jump).epsilon(1e-12));
        CHECK(rep.path_jump_term == doctest::Approx(0.0));
        CHECK(rep.residual <= rep.error_budget);
    }
    SUBCASE("kinked candidates are refused") {
        const SimulationSpec spec = flow_spec(drift_coeffs(0.0, 0.0), 50, 0.05, 4);
        const EnsembleFlow flow = simulate(spec);
        CylindricalFunctional u({{1, ScalarFn::coordinate()}}, 1.0);
        CylindricalFunctional::Term t;
        t.shape = CylindricalFunctional::Shape::Min;
        t.a = 0;
        t.threshold = 1.0;      // the frozen moment sits exactly here
        u.add_term(std::move(t));
        CHECK_THROWS_AS(ito_check(u, flow, spec.coeffs, spec.rates), NumericError);
    }
}

TEST_CASE("residual scales down with finer steps and more particles") {
    const CylindricalFunctional u = CylindricalFunctional::linear_moment(
        1, ScalarFn::coordinate(), 1.0, 1.0, CylindricalFunctional::TimeWeight::ToHorizon);

    auto residual_at = [&](int particles, double dt, std::uint64_t seed) {
        const SimulationSpec spec = flow_spec(drift_coeffs(0.6, 0.8), particles, dt, seed);
        const EnsembleFlow flow = simulate(spec);
        return ito_check(u, flow, spec.coeffs, spec.rates).residual;
    };

    double coarse = 0.0, fine = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        coarse += residual_at(2000, 4e-3, 100 + s);
        fine += residual_at(8000, 2e-3, 200 + s);
    }
    CHECK(fine <= 0.75 * coarse);
}

TEST_CASE("instance validation") {
    Rng rng(1);
    DiscreteInstance inst = tiny_instance(rng, 3, 3);
    CHECK(inst.validate().ok);

    SUBCASE("broken x kernel row") {
        inst.x_step[0](0, 0) += 0.1;
        CHECK_FALSE(inst.validate().ok);
    }
    SUBCASE("cost table must stay strict") {
        inst.costs = CostMatrix::constant(2, 0.0);
        CHECK_FALSE(inst.validate().ok);
    }
}

TEST_CASE("exhaustive switching values") {
    Rng rng(33);

    SUBCASE("zero costs and rewards reduce to the best terminal relabeling") {
        DiscreteInstance inst = tiny_instance(rng, 2, 2);
        for (auto& v : inst.f_table) v = 0.0;
        // Make mode 1 strictly better at the horizon, switching nearly free.
        inst.costs = CostMatrix::constant(2, 1e-6);
        for (int q = 0; q < 2; ++q)
            for (int c = 0; c < inst.cells(); ++c)
                inst.h_table[q * inst.cells() + c] = (c % 2 == 1) ? 1.0 : 0.0;
        // Add the all-cells flip so the whole book can move in one go.
        DiscreteInstance::Action all = inst.actions.front();
        for (int c = 0; c < inst.cells(); ++c) {
            Vec row = Vec::Zero(2);
            row[1] = 1.0;
            all.rows[c] = row;
        }
        inst.actions.push_back(all);
        const InstanceLaw law = random_instance_law(inst, rng);
        const DppSolution sol = dpp_enumeration_solver(inst, 0, law);
        // Everything can be pushed into mode 1 just before the horizon.
        CHECK(sol.value == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("prohibitive costs freeze the modes") {
        DiscreteInstance inst = tiny_instance(rng, 2, 3);
        inst.costs = CostMatrix::constant(2, 100.0);
        const InstanceLaw law = random_instance_law(inst, rng);
        const DppSolution sol = dpp_enumeration_solver(inst, 0, law);
        for (int a : sol.actions) CHECK(a == 0);
    }
    SUBCASE("budget guard") {
        DiscreteInstance inst = tiny_instance(rng, 3, 5);
        const InstanceLaw law = random_instance_law(inst, rng);
        CHECK_THROWS_AS(dpp_enumeration_solver(inst, 0, law, 10.0), NumericError);
    }
}

TEST_CASE("enumeration agrees with the memoization oracle bit for bit") {
    Rng rng(2025);
    for (int trial = 0; trial < 12; ++trial) {
        DiscreteInstance inst = tiny_instance(rng, 2 + (trial % 2), 3);
        const InstanceLaw law = random_instance_law(inst, rng);
        const DppSolution sol = dpp_enumeration_solver(inst, 0, law);
        mfs_tests::DppMemoOracle oracle(inst);
        const double expect = oracle.value(0, law.weights);
        CHECK(sol.value == expect);
    }
}

TEST_CASE("value is monotone in the action menu") {
    Rng rng(71);
    DiscreteInstance inst = tiny_instance(rng, 2, 3);
    const InstanceLaw law = random_instance_law(inst, rng);

    DiscreteInstance small = inst;
    small.actions.resize(3);
    const double v_small = dpp_enumeration_solver(small, 0, law).value;
    const double v_full = dpp_enumeration_solver(inst, 0, law).value;
    CHECK(v_full >= v_small - 1e-15);
}

TEST_CASE("value splits across intermediate times") {
    Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        DiscreteInstance inst = tiny_instance(rng, 2, 4);
        const InstanceLaw law = random_instance_law(inst, rng);
        CHECK(dpp_consistency(inst, 0, 0, law) == 0.0);
        CHECK(dpp_consistency(inst, 0, 2, law) == 0.0);
        CHECK(dpp_consistency(inst, 0, inst.steps, law) == 0.0);
    }
}

TEST_CASE("terminal value equals the terminal aggregate") {
    Rng rng(81);
    DiscreteInstance inst = tiny_instance(rng, 3, 3);
    const InstanceLaw law = random_instance_law(inst, rng);
    const DppSolution sol = dpp_enumeration_solver(inst, inst.steps, law);

    const DiscreteLawS m = law.marginal_m(inst);
    const ChainLaw l = law.marginal_l(inst);
    double H = 0.0;
    for (int q = 0; q < inst.n_states; ++q) {
        double inner = 0.0;
        for (const auto& atom : m.atoms) {
            for (int g = 0; g < static_cast<int>(inst.x_grid.size()); ++g)
                if ((inst.x_grid[g] - atom.x).norm() < 1e-12)
                    inner += atom.weight * inst.h(q, inst.cell(g, atom.mode));
        }
        H += l(q) * inner;
    }
    CHECK(sol.value == doctest::Approx(H).epsilon(1e-15));
}

TEST_CASE("two-scale convergence table") {
    TradingExampleSpec spec;
    spec.states = 4;
    spec.horizon = 1.0;
    spec.a1 = {2.0, 2.0, 4.0, 4.0};
    spec.a0 = {2.0, 2.0, 1.5, 1.5};
    spec.mu1 = 1.0;
    spec.mu2 = 2.0;
    spec.lam1 = 1.0;
    spec.lam2 = 2.0;
    spec.sigma = 0.5;

    std::vector<ConvergenceProbe> probes;
    Rng rng(6);
    for (int k = 0; k < 10; ++k) {
        ConvergenceProbe p;
        p.t = 0.9 * rng.uniform();
        p.m.n_modes = 2;
        p.m.atoms.push_back({Vec::Constant(1, 1.0 + 5.0 * rng.uniform()), 1, 0.5});
        p.m.atoms.push_back({Vec::Constant(1, 1.0 + 5.0 * rng.uniform()), 0, 0.5});
        Vec lw(4);
        for (int q = 0; q < 4; ++q) lw[q] = 0.1 + rng.uniform();
        lw /= lw.sum();
        p.l = ChainLaw(lw);
        probes.push_back(std::move(p));
    }

    const ConvergenceTable table =
        two_scale_convergence(spec, {1.0, 0.1, 0.01}, probes, 50000, 6, 91);
    REQUIRE(table.rows.size() == 3);

    // Block-constant thresholds: candidate and limit candidate coincide.
    for (const auto& row : table.rows) CHECK(row.value_gap <= 1e-12);

    for (std::size_t k = 1; k < table.rows.size(); ++k)
        CHECK(table.rows[k].occupancy_ratio_error <=
              table.rows[k - 1].occupancy_ratio_error +
                  3.0 * (table.rows[k].occupancy_se + table.rows[k - 1].occupancy_se));

    SUBCASE("epsilons must decrease") {
        CHECK_THROWS_AS(two_scale_convergence(spec, {0.1, 1.0}, probes, 1000, 2, 1),
                        InvalidArgument);
    }

    SUBCASE("pure fast chain: no slow coupling") {
        TradingExampleSpec fast_only = spec;
        fast_only.mu1 = 0.0;
        fast_only.mu2 = 0.0;
        const ConvergenceTable t2 =
            two_scale_convergence(fast_only, {1.0, 0.1}, probes, 50000, 6, 91);
        for (const auto& row : t2.rows) {
            CHECK(row.value_gap <= 1e-12);
            CHECK(std::isfinite(row.occupancy_ratio_error));
        }
    }
}
