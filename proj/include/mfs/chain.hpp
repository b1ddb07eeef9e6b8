#ifndef MFS_CHAIN_HPP
#define MFS_CHAIN_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "mfs/common.hpp"
#include "mfs/scalar_fn.hpp"

namespace mfs {

struct DiscreteLawS;

/// Generator of a finite-state continuous-time Markov chain: nonnegative
/// off-diagonal rates, rows summing to zero.
struct GeneratorMatrix {
    Mat rates;

    GeneratorMatrix() = default;
    explicit GeneratorMatrix(Mat r) : rates(std::move(r)) {}

    int size() const { return static_cast<int>(rates.rows()); }
    double operator()(int p, int q) const { return rates(p, q); }

    static GeneratorMatrix zero(int n) { return GeneratorMatrix(Mat::Zero(n, n)); }
    /// Two-state generator with up-rate a (0 -> 1) and down-rate b (1 -> 0).
    static GeneratorMatrix two_state(double a, double b);
};

/// Probability vector over the chain states.
struct ChainLaw {
    Vec weights;

    ChainLaw() = default;
    explicit ChainLaw(Vec w) : weights(std::move(w)) {}
    static ChainLaw point(int q, int n);
    static ChainLaw uniform(int n);

    int size() const { return static_cast<int>(weights.size()); }
    double operator()(int q) const { return weights[q]; }
};

/// Two-time-scale chain: fast block-diagonal part scaled by 1/epsilon plus a
/// slow part on the full state space.
struct TwoScaleSpec {
    std::vector<int> blocks;                 // block sizes m_1..m_L
    std::vector<GeneratorMatrix> fast;       // one generator per block
    GeneratorMatrix slow;                    // full size sum(blocks)
    double epsilon = 1.0;

    int num_blocks() const { return static_cast<int>(blocks.size()); }
    int total_states() const;
    /// Block index of a flat state.
    int block_of(int state) const;
    /// Flat index of the first state of block k.
    int block_offset(int k) const;
};

/// State-dependent jump rates x -> lambda_pq(x) >= 0 for each ordered pair.
struct RateFunction {
    int states = 0;
    std::vector<ScalarFn> entries;          // row-major, diagonal unused

    RateFunction() = default;
    explicit RateFunction(int n) : states(n), entries(n * n) {}
    static RateFunction constants(const GeneratorMatrix& g);

    const ScalarFn& at(int p, int q) const { return entries[p * states + q]; }
    ScalarFn& at(int p, int q) { return entries[p * states + q]; }
    double rate(int p, int q, const Vec& x) const { return at(p, q)(x); }
};

struct ChainPath {
    double dt = 0.0;
    std::vector<int> states;                // one entry per grid point
    Vec occupancy;                          // fraction of time per state
};

ValidationReport validate_generator(const GeneratorMatrix& g);

/// True when the generator has a one-dimensional null space, i.e. the chain
/// admits a unique stationary distribution.
bool is_irreducible(const GeneratorMatrix& g, double tol = 1e-9);

/// Solves v G = 0, sum(v) = 1. Throws NumericError for reducible input.
ChainLaw stationary_distribution(const GeneratorMatrix& g);

ValidationReport validate_two_scale(const TwoScaleSpec& spec);

/// (1/epsilon) * blockdiag(fast) + slow.
GeneratorMatrix build_epsilon_generator(const TwoScaleSpec& spec);

/// Aggregated generator on the block states:
/// diag(v^1..v^L) * slow * diag(1_{m_1}..1_{m_L}).
GeneratorMatrix averaged_generator(const TwoScaleSpec& spec);

/// Sums the law within each block.
ChainLaw aggregate_chain_law(const TwoScaleSpec& spec, const ChainLaw& l);

/// Measure-dependent generator: lambda_pq(m) integrates the rate map over
/// every atom of m; diagonal entries are set to minus the row sums.
GeneratorMatrix extended_rates(const RateFunction& rf, const DiscreteLawS& m);

/// Generator source for path sampling; called once per grid step.
using GeneratorSource = std::function<GeneratorMatrix(double t)>;

/// Euler-scheme chain path on a fixed grid: from state p each step jumps to
/// q != p with probability lambda_pq * dt. Throws when dt * max|lambda_pp|
/// exceeds 1/2.
ChainPath sample_chain_path(const GeneratorSource& source, const ChainLaw& l0,
                            double horizon, double dt, std::uint64_t seed);
ChainPath sample_chain_path(const GeneratorMatrix& g, const ChainLaw& l0,
                            double horizon, double dt, std::uint64_t seed);

} // namespace mfs

#endif
