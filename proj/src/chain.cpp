#include "mfs/chain.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "mfs/measure.hpp"
#include "mfs/rng.hpp"

namespace mfs {

namespace {
constexpr double kRowSumTol = 1e-12;
}

GeneratorMatrix GeneratorMatrix::two_state(double a, double b) {
    Mat g(2, 2);
    g << -a, a, b, -b;
    return GeneratorMatrix(std::move(g));
}

ChainLaw ChainLaw::point(int q, int n) {
    Vec w = Vec::Zero(n);
    w[q] = 1.0;
    return ChainLaw(std::move(w));
}

ChainLaw ChainLaw::uniform(int n) {
    return ChainLaw(Vec::Constant(n, 1.0 / n));
}

int TwoScaleSpec::total_states() const {
    int n = 0;
    for (int b : blocks) n += b;
    return n;
}

int TwoScaleSpec::block_of(int state) const {
    int off = 0;
    for (int k = 0; k < num_blocks(); ++k) {
        off += blocks[k];
        if (state < off) return k;
    }
    throw InvalidArgument("state index outside the block layout");
}

int TwoScaleSpec::block_offset(int k) const {
    int off = 0;
    for (int j = 0; j < k; ++j) off += blocks[j];
    return off;
}

RateFunction RateFunction::constants(const GeneratorMatrix& g) {
    RateFunction rf(g.size());
    for (int p = 0; p < g.size(); ++p)
        for (int q = 0; q < g.size(); ++q)
            if (p != q) rf.at(p, q) = ScalarFn::constant(g(p, q));
    return rf;
}

ValidationReport validate_generator(const GeneratorMatrix& g) {
    const auto& m = g.rates;
    if (m.rows() != m.cols())
        return ValidationReport::fail("generator must be square");
    for (int p = 0; p < m.rows(); ++p) {
        double row = 0.0;
        for (int q = 0; q < m.cols(); ++q) {
            if (p != q && m(p, q) < 0.0) {
                std::ostringstream os;
                os << "negative off-diagonal rate at (" << p << "," << q
                   << "): " << m(p, q);
                return ValidationReport::fail(os.str());
            }
            row += m(p, q);
        }
        if (std::abs(row) > kRowSumTol) {
            std::ostringstream os;
            os << "row " << p << " sums to " << row;
            return ValidationReport::fail(os.str());
        }
    }
    return ValidationReport::pass();
}

bool is_irreducible(const GeneratorMatrix& g, double tol) {
    const int n = g.size();
    if (n == 1) return true;
    Eigen::JacobiSVD<Mat> svd(g.rates);
    const auto& sv = svd.singularValues();
    const double scale = std::max(1.0, sv.size() > 0 ? sv[0] : 0.0);
    int rank = 0;
    for (int k = 0; k < sv.size(); ++k)
        if (sv[k] > tol * scale) ++rank;
    return rank == n - 1;
}

ChainLaw stationary_distribution(const GeneratorMatrix& g) {
    auto rep = validate_generator(g);
    require(rep.ok, "stationary_distribution: " + rep.message);
    const int n = g.size();
    if (n == 1) return ChainLaw(Vec::Ones(1));
    if (!is_irreducible(g))
        throw NumericError("stationary_distribution: generator is reducible");

    // Augmented system [G^T; 1^T] v = [0; 1], solved by least squares.
    Mat A(n + 1, n);
    A.topRows(n) = g.rates.transpose();
    A.row(n).setOnes();
    Vec rhs = Vec::Zero(n + 1);
    rhs[n] = 1.0;
    Vec v = A.colPivHouseholderQr().solve(rhs);

    const double resid = (v.transpose() * g.rates).lpNorm<Eigen::Infinity>();
    if (resid > 1e-10)
        throw NumericError("stationary_distribution: residual " + std::to_string(resid));
    // Clamp tiny negative round-off and renormalize.
    for (int k = 0; k < n; ++k) v[k] = std::max(v[k], 0.0);
    v /= v.sum();
    return ChainLaw(std::move(v));
}

ValidationReport validate_two_scale(const TwoScaleSpec& spec) {
    if (spec.blocks.empty()) return ValidationReport::fail("no blocks");
    if (static_cast<int>(spec.fast.size()) != spec.num_blocks())
        return ValidationReport::fail("one fast generator required per block");
    for (int k = 0; k < spec.num_blocks(); ++k) {
        if (spec.fast[k].size() != spec.blocks[k])
            return ValidationReport::fail("fast block size mismatch at block " +
                                          std::to_string(k));
        auto rep = validate_generator(spec.fast[k]);
        if (!rep.ok)
            return ValidationReport::fail("fast block " + std::to_string(k) + ": " +
                                          rep.message);
        if (!is_irreducible(spec.fast[k]))
            return ValidationReport::fail("fast block " + std::to_string(k) +
                                          " is reducible");
    }
    if (spec.slow.size() != spec.total_states())
        return ValidationReport::fail("slow generator size mismatch");
    auto rep = validate_generator(spec.slow);
    if (!rep.ok) return ValidationReport::fail("slow part: " + rep.message);
    if (!(spec.epsilon > 0.0)) return ValidationReport::fail("epsilon must be positive");
    return ValidationReport::pass();
}

GeneratorMatrix build_epsilon_generator(const TwoScaleSpec& spec) {
    require(spec.epsilon > 0.0, "build_epsilon_generator: epsilon must be positive");
    auto rep = validate_two_scale(spec);
    require(rep.ok, "build_epsilon_generator: " + rep.message);

    const int n = spec.total_states();
    Mat out = spec.slow.rates;
    for (int k = 0, off = 0; k < spec.num_blocks(); off += spec.blocks[k], ++k)
        out.block(off, off, spec.blocks[k], spec.blocks[k]) +=
            spec.fast[k].rates / spec.epsilon;
    (void)n;
    return GeneratorMatrix(std::move(out));
}

GeneratorMatrix averaged_generator(const TwoScaleSpec& spec) {
    auto rep = validate_two_scale(spec);
    require(rep.ok, "averaged_generator: " + rep.message);

    const int L = spec.num_blocks();
    const int M = spec.total_states();
    Mat V = Mat::Zero(L, M);        // block-stationary rows
    Mat E = Mat::Zero(M, L);        // block indicator columns
    for (int k = 0, off = 0; k < L; off += spec.blocks[k], ++k) {
        ChainLaw v = stationary_distribution(spec.fast[k]);
        for (int w = 0; w < spec.blocks[k]; ++w) {
            V(k, off + w) = v(w);
            E(off + w, k) = 1.0;
        }
    }
    return GeneratorMatrix(V * spec.slow.rates * E);
}

ChainLaw aggregate_chain_law(const TwoScaleSpec& spec, const ChainLaw& l) {
    require(l.size() == spec.total_states(),
            "aggregate_chain_law: law size does not match the block layout");
    Vec out = Vec::Zero(spec.num_blocks());
    for (int k = 0, off = 0; k < spec.num_blocks(); off += spec.blocks[k], ++k)
        for (int w = 0; w < spec.blocks[k]; ++w) out[k] += l(off + w);
    return ChainLaw(std::move(out));
}

GeneratorMatrix extended_rates(const RateFunction& rf, const DiscreteLawS& m) {
    require(!m.atoms.empty(), "extended_rates: measure has empty support");
    const int n = rf.states;
    Mat out = Mat::Zero(n, n);
    for (int p = 0; p < n; ++p) {
        double row = 0.0;
        for (int q = 0; q < n; ++q) {
            if (p == q) continue;
            double r = 0.0;
            for (const auto& atom : m.atoms) r += atom.weight * rf.rate(p, q, atom.x);
            out(p, q) = r;
            row += r;
        }
        out(p, p) = -row;
    }
    return GeneratorMatrix(std::move(out));
}

ChainPath sample_chain_path(const GeneratorSource& source, const ChainLaw& l0,
                            double horizon, double dt, std::uint64_t seed) {
    require(dt > 0.0, "sample_chain_path: dt must be positive");
    require(horizon >= 0.0, "sample_chain_path: negative horizon");
    const int steps = static_cast<int>(std::llround(horizon / dt));
    const int n = l0.size();

    Rng rng(seed);
    ChainPath path;
    path.dt = dt;
    path.states.reserve(steps + 1);
    path.occupancy = Vec::Zero(n);

    int state = rng.categorical(l0.weights, n);
    path.states.push_back(state);
    std::vector<double> probs(n);
    for (int k = 0; k < steps; ++k) {
        const GeneratorMatrix g = source(k * dt);
        double max_diag = 0.0;
        for (int p = 0; p < n; ++p) max_diag = std::max(max_diag, std::abs(g(p, p)));
        if (dt * max_diag > 0.5)
            throw NumericError("sample_chain_path: dt * max|lambda_pp| exceeds 1/2");

        double stay = 1.0;
        for (int q = 0; q < n; ++q) {
            if (q == state) continue;
            probs[q] = g(state, q) * dt;
            stay -= probs[q];
        }
        probs[state] = stay;
        path.occupancy[state] += 1.0;
        state = rng.categorical(probs, n);
        path.states.push_back(state);
    }
    if (steps > 0) path.occupancy /= static_cast<double>(steps);
    return path;
}

ChainPath sample_chain_path(const GeneratorMatrix& g, const ChainLaw& l0, double horizon,
                            double dt, std::uint64_t seed) {
    return sample_chain_path([&](double) { return g; }, l0, horizon, dt, seed);
}

} // namespace mfs
