#include <doctest.h>

#include <cmath>

#include "mfs/chain.hpp"
#include "mfs/measure.hpp"
#include "mfs/rng.hpp"
#include "mfs/trading.hpp"

using namespace mfs;

namespace {

GeneratorMatrix cyclic3(double a, double b, double c) {
    Mat g(3, 3);
    g << -a, a, 0, 0, -b, b, c, 0, -c;
    return GeneratorMatrix(std::move(g));
}

GeneratorMatrix random_irreducible(Rng& rng, int n) {
    Mat g = Mat::Zero(n, n);
    for (int p = 0; p < n; ++p) {
        double row = 0.0;
        for (int q = 0; q < n; ++q) {
            if (p == q) continue;
            g(p, q) = 0.1 + rng.uniform();
            row += g(p, q);
        }
        g(p, p) = -row;
    }
    return GeneratorMatrix(std::move(g));
}

} // namespace

TEST_CASE("generator validation") {
    CHECK(validate_generator(GeneratorMatrix::two_state(1.0, 2.0)).ok);

    Mat bad(2, 2);
    bad << -1.0, 0.5, 2.0, -2.0;
    auto rep = validate_generator(GeneratorMatrix(bad));
    CHECK_FALSE(rep.ok);
    CHECK(rep.message.find("row 0") != std::string::npos);

    Mat neg(2, 2);
    neg << 1.0, -1.0, 2.0, -2.0;
    CHECK_FALSE(validate_generator(GeneratorMatrix(neg)).ok);

    Mat rect(2, 3);
    rect.setZero();
    CHECK_FALSE(validate_generator(GeneratorMatrix(rect)).ok);
}

TEST_CASE("stationary distribution closed forms") {
    const ChainLaw v = stationary_distribution(GeneratorMatrix::two_state(1.0, 2.0));
    CHECK(v(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(v(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const ChainLaw single = stationary_distribution(GeneratorMatrix::zero(1));
    CHECK(single(0) == doctest::Approx(1.0));

    // Reducible: two disconnected states.
    CHECK_THROWS_AS(stationary_distribution(GeneratorMatrix::zero(2)), NumericError);
}

TEST_CASE("stationary distribution matches long-run occupancy of a sampled path") {
    const GeneratorMatrix g = cyclic3(1.0, 2.0, 3.0);
    const ChainLaw v = stationary_distribution(g);
    // pi solves pi Q = 0: proportional to (6, 3, 2).
    CHECK(v(0) == doctest::Approx(6.0 / 11.0).epsilon(1e-10));

    const ChainPath path = sample_chain_path(g, ChainLaw::point(0, 3), 1e4, 0.01, 77);
    for (int q = 0; q < 3; ++q)
        CHECK(std::abs(path.occupancy[q] - v(q)) < 1e-2);
}

TEST_CASE("stationary residual property on random irreducible generators") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform() * 4);
        const GeneratorMatrix g = random_irreducible(rng, n);
        const ChainLaw v = stationary_distribution(g);
        CHECK((v.weights.transpose() * g.rates).lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK(v.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("epsilon generator assembly") {
    TwoScaleSpec spec;
    spec.blocks = {2, 2};
    spec.fast = {GeneratorMatrix::two_state(1.0, 2.0), GeneratorMatrix::two_state(1.0, 2.0)};
    Mat slow = Mat::Zero(4, 4);
    slow << -0.5, 0, 0.5, 0, 0, -0.5, 0, 0.5, 1.5, 0, -1.5, 0, 0, 1.5, 0, -1.5;
    spec.slow = GeneratorMatrix(slow);
    spec.epsilon = 0.1;

    const GeneratorMatrix g = build_epsilon_generator(spec);
    CHECK(validate_generator(g).ok);
    CHECK(g(0, 1) == doctest::Approx(10.0));        // fast scaled by 1/eps
    CHECK(g(0, 2) == doctest::Approx(0.5));         // slow kept as is
    CHECK(g(0, 0) == doctest::Approx(-10.5));

    SUBCASE("identity case: singleton blocks carry a zero fast part") {
        TwoScaleSpec ident;
        ident.blocks = {1, 1, 1, 1};
        ident.fast.assign(4, GeneratorMatrix::zero(1));
        ident.slow = spec.slow;
        ident.epsilon = 1.0;
        const GeneratorMatrix g1 = build_epsilon_generator(ident);
        CHECK((g1.rates - spec.slow.rates).lpNorm<Eigen::Infinity>() == 0.0);
        // Aggregation over singleton blocks is the identity as well.
        const GeneratorMatrix avg = averaged_generator(ident);
        CHECK((avg.rates - spec.slow.rates).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("zero fast blocks of size two are reducible and rejected") {
        spec.fast = {GeneratorMatrix::zero(2), GeneratorMatrix::zero(2)};
        spec.epsilon = 1.0;
        CHECK_FALSE(validate_two_scale(spec).ok);
    }
    SUBCASE("nonpositive epsilon") {
        spec.epsilon = 0.0;
        CHECK_THROWS_AS(build_epsilon_generator(spec), InvalidArgument);
    }
}

TEST_CASE("averaged generator of the four-state layout") {
    TradingExampleSpec spec;
    spec.states = 4;
    spec.a1 = {2.0, 2.0, 4.0, 4.0};
    spec.a0 = {2.0, 2.0, 1.5, 1.5};
    spec.mu1 = 0.7;
    spec.mu2 = 1.9;
    spec.lam1 = 1.3;
    spec.lam2 = 0.4;
    spec.epsilon = 0.05;

    const GeneratorMatrix qbar = averaged_generator(spec.two_scale());
    CHECK(qbar.size() == 2);
    CHECK(qbar(0, 0) == doctest::Approx(-0.7).epsilon(1e-14));
    CHECK(qbar(0, 1) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(qbar(1, 0) == doctest::Approx(1.9).epsilon(1e-14));
    CHECK(qbar(1, 1) == doctest::Approx(-1.9).epsilon(1e-14));
    CHECK(validate_generator(qbar).ok);

    SUBCASE("single block aggregates to the zero generator") {
        TwoScaleSpec one;
        one.blocks = {2};
        one.fast = {GeneratorMatrix::two_state(1.0, 1.0)};
        one.slow = GeneratorMatrix::zero(2);
        const GeneratorMatrix z = averaged_generator(one);
        CHECK(z.size() == 1);
        CHECK(z(0, 0) == doctest::Approx(0.0));
    }
}

TEST_CASE("averaged generator stays valid on random specs") {
    Rng rng(1234);
    for (int trial = 0; trial < 20; ++trial) {
        TwoScaleSpec spec;
        const int L = 2 + static_cast<int>(rng.uniform() * 2);
        int total = 0;
        for (int k = 0; k < L; ++k) {
            const int b = 2 + static_cast<int>(rng.uniform() * 2);
            spec.blocks.push_back(b);
            spec.fast.push_back(random_irreducible(rng, b));
            total += b;
        }
        spec.slow = random_irreducible(rng, total);
        spec.epsilon = 0.1;
        CHECK(validate_generator(averaged_generator(spec)).ok);
    }
}

TEST_CASE("chain law aggregation") {
    TwoScaleSpec spec;
    spec.blocks = {2, 2};
    spec.fast = {GeneratorMatrix::two_state(1.0, 1.0), GeneratorMatrix::two_state(1.0, 1.0)};
    spec.slow = GeneratorMatrix::zero(4);

    Vec w(4);
    w << 0.1, 0.2, 0.3, 0.4;
    const ChainLaw agg = aggregate_chain_law(spec, ChainLaw(w));
    CHECK(agg(0) == doctest::Approx(0.3));
    CHECK(agg(1) == doctest::Approx(0.7));
    CHECK(agg.weights.sum() == doctest::Approx(1.0));

    Vec conc(4);
    conc << 0.6, 0.4, 0.0, 0.0;
    CHECK(aggregate_chain_law(spec, ChainLaw(conc))(0) == doctest::Approx(1.0));

    CHECK_THROWS_AS(aggregate_chain_law(spec, ChainLaw::uniform(3)), InvalidArgument);
}

TEST_CASE("extended rates integrate the measure") {
    RateFunction rf(2);
    rf.at(0, 1) = ScalarFn::quadratic(0.0, Vec::Zero(1), Vec::Ones(1));   // x^2
    rf.at(1, 0) = ScalarFn::constant(3.0);

    DiscreteLawS m;
    m.n_modes = 2;
    m.atoms.push_back({Vec::Constant(1, 1.0), 0, 0.5});
    m.atoms.push_back({Vec::Constant(1, 3.0), 1, 0.5});

    const GeneratorMatrix g = extended_rates(rf, m);
    CHECK(g(0, 1) == doctest::Approx(5.0).epsilon(1e-14));    // 0.5*1 + 0.5*9
    CHECK(g(1, 0) == doctest::Approx(3.0));
    CHECK(validate_generator(g).ok);

    DiscreteLawS empty;
    empty.n_modes = 1;
    CHECK_THROWS_AS(extended_rates(rf, empty), InvalidArgument);
}

TEST_CASE("chain path sampling") {
    SUBCASE("zero generator keeps the path constant") {
        const ChainPath p =
            sample_chain_path(GeneratorMatrix::zero(1), ChainLaw::point(0, 1), 1.0, 0.01, 5);
        for (int s : p.states) CHECK(s == 0);
    }
    SUBCASE("two-state long-run occupancy approaches the stationary law") {
        const GeneratorMatrix g = GeneratorMatrix::two_state(1.0, 2.0);
        const ChainPath p = sample_chain_path(g, ChainLaw::point(0, 2), 1e3, 0.01, 11);
        CHECK(std::abs(p.occupancy[0] - 2.0 / 3.0) < 2e-2);
        CHECK(std::abs(p.occupancy[1] - 1.0 / 3.0) < 2e-2);
    }
    SUBCASE("fixed seed reproduces the path") {
        const GeneratorMatrix g = GeneratorMatrix::two_state(1.0, 2.0);
        const ChainPath a = sample_chain_path(g, ChainLaw::uniform(2), 10.0, 0.01, 123);
        const ChainPath b = sample_chain_path(g, ChainLaw::uniform(2), 10.0, 0.01, 123);
        CHECK(a.states == b.states);
    }
    SUBCASE("step-size guard") {
        const GeneratorMatrix g = GeneratorMatrix::two_state(100.0, 100.0);
        CHECK_THROWS_AS(sample_chain_path(g, ChainLaw::uniform(2), 1.0, 0.01, 1),
                        NumericError);
    }
    SUBCASE("time-varying source") {
        // Rates switch halfway; the occupancy lands between the two
        // stationary laws.
        const GeneratorSource source = [](double t) {
            return t < 500.0 ? GeneratorMatrix::two_state(1.0, 2.0)
                             : GeneratorMatrix::two_state(2.0, 1.0);
        };
        const ChainPath p = sample_chain_path(source, ChainLaw::uniform(2), 1e3, 0.01, 3);
        CHECK(std::abs(p.occupancy[0] - 0.5) < 5e-2);
    }
}

TEST_CASE("within-block occupancy ratio tightens as epsilon shrinks") {
    TradingExampleSpec spec;
    spec.states = 4;
    spec.a1 = {2.0, 2.0, 4.0, 4.0};
    spec.a0 = {2.0, 2.0, 1.5, 1.5};
    spec.mu1 = 1.0;
    spec.mu2 = 2.0;
    spec.lam1 = 1.0;
    spec.lam2 = 2.0;

    const double target = spec.lam2 / spec.lam1;
    TwoScaleSpec ts = spec.two_scale();
    std::vector<double> errors, ses;
    for (double eps : {1.0, 0.1, 0.01}) {
        ts.epsilon = eps;
        const GeneratorMatrix g = build_epsilon_generator(ts);
        double max_diag = 0.0;
        for (int p = 0; p < 4; ++p) max_diag = std::max(max_diag, std::abs(g(p, p)));
        const double dt = 0.4 / max_diag;
        double sum = 0.0, sumsq = 0.0;
        const int seeds = 8;
        for (int s = 0; s < seeds; ++s) {
            const ChainPath path =
                sample_chain_path(g, ChainLaw::uniform(4), 60000 * dt, dt, mix_seed(7, s));
            const double err = std::abs(path.occupancy[0] / path.occupancy[1] - target);
            sum += err;
            sumsq += err * err;
        }
        const double mean = sum / seeds;
        errors.push_back(mean);
        ses.push_back(std::sqrt(std::max(0.0, (sumsq / seeds - mean * mean) / (seeds - 1))));
    }
    for (std::size_t k = 1; k < errors.size(); ++k)
        CHECK(errors[k] <= errors[k - 1] + 3.0 * (ses[k] + ses[k - 1]));
}
