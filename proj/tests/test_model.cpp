#include <doctest.h>

#include <cmath>

#include "mfs/model.hpp"
#include "mfs/rng.hpp"
#include "mfs/trading.hpp"

using namespace mfs;

namespace {

DiscreteLawS law(std::initializer_list<std::tuple<double, int, double>> atoms,
                 int n_modes = 2) {
    DiscreteLawS m;
    m.n_modes = n_modes;
    for (auto [x, mode, w] : atoms) m.atoms.push_back({Vec::Constant(1, x), mode, w});
    return m;
}

CoefficientSet tabulated(int n_states, int n_modes) {
    CoefficientSet cs;
    cs.n_states = n_states;
    cs.n_modes = n_modes;
    cs.dim = 1;
    cs.drift.assign(n_states * n_modes, VecCoef::constant(Vec::Zero(1)));
    cs.sigma_diag.assign(n_states * n_modes, VecCoef::constant(Vec::Zero(1)));
    cs.running.assign(n_states * n_modes, ScalarCoef::constant(0.0));
    cs.terminal.assign(n_states * n_modes, ScalarCoef::constant(0.0));
    return cs;
}

} // namespace

TEST_CASE("cost validation") {
    const std::vector<double> tg = default_time_grid(1.0);
    const std::vector<Vec> xg = default_x_grid(0.1, 10.0);

    SUBCASE("two symmetric positive costs pass") {
        CHECK(validate_costs(CostMatrix::constant(2, 0.5), tg, xg).ok);
    }
    SUBCASE("zero leg fails") {
        CostMatrix g = CostMatrix::constant(2, 0.5);
        g.entries[0 * 2 + 1].scale = 0.0;
        const auto rep = validate_costs(g, tg, xg);
        CHECK_FALSE(rep.ok);
        CHECK(rep.message.find("nonpositive") != std::string::npos);
    }
    SUBCASE("triangle equality fails strictness") {
        CostMatrix g = CostMatrix::constant(3, 1.0);
        g.entries[0 * 3 + 2].scale = 2.0;      // g(0,2) = g(0,1) + g(1,2)
        const auto rep = validate_costs(g, tg, xg);
        CHECK_FALSE(rep.ok);
        CHECK(rep.message.find("triangle") != std::string::npos);
    }
    SUBCASE("separable trading costs pass for t < horizon with positive psi") {
        const CostMatrix g =
            CostMatrix::separable_to_horizon(2, 1.0, ScalarFn::coordinate());
        CHECK(validate_costs(g, tg, xg).ok);
    }
}

TEST_CASE("aggregate F basics") {
    CoefficientSet cs = tabulated(2, 2);
    const DiscreteLawS m = law({{3.0, 0, 1.0}});

    SUBCASE("constant reward integrates to itself") {
        for (auto& f : cs.running) f = ScalarCoef::constant(1.0);
        CHECK(aggregate_F(0.0, m, ChainLaw::uniform(2), cs) == doctest::Approx(1.0));
    }
    SUBCASE("coordinate reward picks the atom position") {
        for (auto& f : cs.running) f.in_x = ScalarFn::coordinate();
        CHECK(aggregate_F(0.0, m, ChainLaw::point(0, 2), cs) == doctest::Approx(3.0));
    }
    SUBCASE("state-indexed constants mix linearly in l") {
        cs.running[0 * 2 + 0] = cs.running[0 * 2 + 1] = ScalarCoef::constant(2.0);
        cs.running[1 * 2 + 0] = cs.running[1 * 2 + 1] = ScalarCoef::constant(6.0);
        Vec lw(2);
        lw << 0.25, 0.75;
        CHECK(aggregate_F(0.0, m, ChainLaw(lw), cs) == doctest::Approx(0.25 * 2 + 0.75 * 6));
    }
}

TEST_CASE("aggregate H basics") {
    CoefficientSet cs = tabulated(2, 2);
    const DiscreteLawS m = law({{1.0, 1, 0.5}, {3.0, 1, 0.5}});

    SUBCASE("zero terminal reward") {
        CHECK(aggregate_H(m, ChainLaw::uniform(2), cs) == doctest::Approx(0.0));
    }
    SUBCASE("quadratic terminal reward") {
        for (auto& h : cs.terminal)
            h.in_x = ScalarFn::quadratic(0.0, Vec::Zero(1), Vec::Ones(1));
        CHECK(aggregate_H(m, ChainLaw::uniform(2), cs) == doctest::Approx(5.0));
        CHECK(aggregate_H(m, ChainLaw::point(1, 2), cs) == doctest::Approx(5.0));
    }
    SUBCASE("state constant passes through a point law") {
        cs.terminal[1 * 2 + 0] = cs.terminal[1 * 2 + 1] = ScalarCoef::constant(4.5);
        CHECK(aggregate_H(m, ChainLaw::point(1, 2), cs) == doctest::Approx(4.5));
    }
}

TEST_CASE("aggregates are linear in l and in the weights") {
    Rng rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        CoefficientSet cs = tabulated(2, 2);
        for (auto& f : cs.running) {
            f.c = rng.uniform();
            f.in_x = ScalarFn::affine(rng.uniform(), Vec::Constant(1, rng.uniform()));
        }
        const DiscreteLawS m1 = law({{rng.uniform() * 4, 1, 0.5}, {rng.uniform() * 4, 0, 0.5}});
        const DiscreteLawS m2 = law({{rng.uniform() * 4, 0, 1.0}});
        Vec la(2), lb(2);
        la << 0.3, 0.7;
        lb << 0.9, 0.1;
        const double lambda = rng.uniform();

        // Linearity in l.
        Vec lmix = lambda * la + (1.0 - lambda) * lb;
        CHECK(aggregate_F(0.1, m1, ChainLaw(lmix), cs) ==
              doctest::Approx(lambda * aggregate_F(0.1, m1, ChainLaw(la), cs) +
                              (1.0 - lambda) * aggregate_F(0.1, m1, ChainLaw(lb), cs))
                  .epsilon(1e-12));

        // Linearity in the measure weights (f has no mean-field part here).
        DiscreteLawS mmix;
        mmix.n_modes = 2;
        for (const auto& a : m1.atoms) mmix.atoms.push_back({a.x, a.mode, lambda * a.weight});
        for (const auto& a : m2.atoms)
            mmix.atoms.push_back({a.x, a.mode, (1.0 - lambda) * a.weight});
        CHECK(aggregate_F(0.1, mmix, ChainLaw(la), cs) ==
              doctest::Approx(lambda * aggregate_F(0.1, m1, ChainLaw(la), cs) +
                              (1.0 - lambda) * aggregate_F(0.1, m2, ChainLaw(la), cs))
                  .epsilon(1e-12));

        // Same superposition for the terminal aggregate.
        for (auto& h : cs.terminal) {
            h.c = rng.uniform();
            h.in_x = ScalarFn::affine(rng.uniform(), Vec::Constant(1, rng.uniform()));
        }
        CHECK(aggregate_H(m1, ChainLaw(lmix), cs) ==
              doctest::Approx(lambda * aggregate_H(m1, ChainLaw(la), cs) +
                              (1.0 - lambda) * aggregate_H(m1, ChainLaw(lb), cs))
                  .epsilon(1e-12));
        CHECK(aggregate_H(mmix, ChainLaw(la), cs) ==
              doctest::Approx(lambda * aggregate_H(m1, ChainLaw(la), cs) +
                              (1.0 - lambda) * aggregate_H(m2, ChainLaw(la), cs))
                  .epsilon(1e-12));
    }
}

TEST_CASE("switch cost basics") {
    const DiscreteLawS m = law({{2.0, 1, 1.0}});
    const CostMatrix g = CostMatrix::separable_to_horizon(2, 1.0, ScalarFn::coordinate());

    SUBCASE("identity costs nothing") {
        CHECK(switch_cost(m, InterventionKernel::identity(m), 0.25, g) ==
              doctest::Approx(0.0));
    }
    SUBCASE("full switch pays (T - t) psi(x)") {
        InterventionKernel k = InterventionKernel::identity(m);
        k.rows[0] = Vec::Zero(2);
        k.rows[0][0] = 1.0;
        CHECK(switch_cost(m, k, 0.25, g) == doctest::Approx(0.75 * 2.0));
    }
    SUBCASE("half switch pays half") {
        InterventionKernel k = InterventionKernel::identity(m);
        k.rows[0] = Vec::Constant(2, 0.5);
        CHECK(switch_cost(m, k, 0.25, g) == doctest::Approx(0.5 * 0.75 * 2.0));
    }
}

TEST_CASE("switch record reproduces the law-level cost") {
    SUBCASE("hand cases") {
        const DiscreteLawS m = law({{2.0, 1, 0.6}, {1.0, 0, 0.4}});
        const CostMatrix g = CostMatrix::constant(2, 0.8);

        const SwitchRecord ident = make_switch_record(m, InterventionKernel::identity(m));
        CHECK(aggregate_G(0.0, ident, g) == doctest::Approx(0.0));

        InterventionKernel k = InterventionKernel::identity(m);
        k.rows[0] = Vec::Zero(2);
        k.rows[0][0] = 1.0;
        const SwitchRecord rec = make_switch_record(m, k);
        CHECK(aggregate_G(0.0, rec, g) == doctest::Approx(0.6 * 0.8));
        CHECK(aggregate_G(0.0, rec, g) == doctest::Approx(switch_cost(m, k, 0.0, g)));
    }
    SUBCASE("random kernels agree with switch_cost") {
        Rng rng(808);
        for (int trial = 0; trial < 40; ++trial) {
            DiscreteLawS m;
            m.n_modes = 2;
            const int atoms = 1 + static_cast<int>(rng.uniform() * 4);
            Vec w(atoms);
            for (int a = 0; a < atoms; ++a) w[a] = 0.1 + rng.uniform();
            w /= w.sum();
            for (int a = 0; a < atoms; ++a)
                m.atoms.push_back({Vec::Constant(1, rng.uniform() * 5),
                                   rng.uniform() < 0.5 ? 0 : 1, w[a]});
            InterventionKernel k;
            for (int a = 0; a < atoms; ++a) {
                Vec row(2);
                row[0] = rng.uniform();
                row[1] = 1.0 - row[0];
                k.rows.push_back(row);
            }
            const CostMatrix g =
                CostMatrix::separable_to_horizon(2, 1.0, ScalarFn::coordinate());
            const double t = 0.5 * rng.uniform();
            CHECK(aggregate_G(t, make_switch_record(m, k), g) ==
                  doctest::Approx(switch_cost(m, k, t, g)).epsilon(1e-12));
        }
    }
}
