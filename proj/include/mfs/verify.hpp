#ifndef MFS_VERIFY_HPP
#define MFS_VERIFY_HPP

#include <cstdint>
#include <vector>

#include "mfs/chain.hpp"
#include "mfs/common.hpp"
#include "mfs/flow.hpp"
#include "mfs/functional.hpp"
#include "mfs/measure.hpp"
#include "mfs/model.hpp"
#include "mfs/trading.hpp"

namespace mfs {

/// Term-by-term evaluation of the measure-flow change-of-variables formula
/// on an empirical flow.
struct ItoReport {
    double lhs = 0.0;               // u(T, m_T-; l_T-) - u(0, m_0-; l_0-)
    double time_and_jump_term = 0.0;    // integral of dt-term + chain generator
    double drift_diffusion_term = 0.0;  // particle-averaged first/second order term
    double measure_jump_term = 0.0;     // sum over intervention times
    double path_jump_term = 0.0;        // per-path jumps off the measure-jump set
    double rhs = 0.0;
    double residual = 0.0;          // |lhs - rhs|
    double error_budget = 0.0;      // C * (dt + N^{-1/2})
    bool ok = false;                // residual <= error_budget
};

/// Replays the flow deterministically and accumulates every term of the
/// formula. Refuses candidates whose moment path crosses a kink.
ItoReport ito_check(const CylindricalFunctional& u, const EnsembleFlow& flow,
                    const CoefficientSet& coeffs, const RateFunction& rf,
                    double budget_constant = 10.0);

/// Small fully-enumerable switching problem: laws supported on a fixed
/// spatial grid, deterministic law dynamics per step, finite kernel menu.
struct DiscreteInstance {
    std::vector<Vec> x_grid;            // <= 5 points
    int n_modes = 2;
    int n_states = 2;
    int steps = 3;
    double dt = 0.25;

    // One-step spatial transition kernel per (mode, chain state):
    // row-stochastic matrices over x_grid indices.
    std::vector<Mat> x_step;            // (i, q) row-major, each G x G
    Mat chain_step;                     // row-stochastic over chain states

    // Kernel menu: each action holds one flip row per support cell
    // (x index, mode) -> distribution over target modes.
    struct Action {
        std::vector<Vec> rows;          // per cell, size n_modes
    };
    std::vector<Action> actions;        // first entry should be the identity

    CostMatrix costs;
    // Reward tables: f indexed by (step, q, cell), h by (q, cell).
    std::vector<double> f_table;
    std::vector<double> h_table;

    int cells() const { return static_cast<int>(x_grid.size()) * n_modes; }
    int cell(int xi, int mode) const { return xi * n_modes + mode; }

    double f(int step, int q, int c) const {
        return f_table[(step * n_states + q) * cells() + c];
    }
    double h(int q, int c) const { return h_table[q * cells() + c]; }

    ValidationReport validate() const;
    /// Number of action sequences from step k to the horizon.
    double sequence_count(int from_step) const;
};

/// Joint law over (x index, mode, chain state); the DPP state.
struct InstanceLaw {
    Vec weights;                        // cells * n_states, cell-major
    DiscreteLawS marginal_m(const DiscreteInstance& inst) const;
    ChainLaw marginal_l(const DiscreteInstance& inst) const;
};

InstanceLaw make_instance_law(const DiscreteInstance& inst, const DiscreteLawS& m,
                              const ChainLaw& l);

struct DppSolution {
    double value = 0.0;
    std::vector<int> actions;           // optimal action index per step
};

/// Exact maximum over all action sequences by depth-first enumeration, with
/// rewards folded backwards so subproblem values reproduce bit-for-bit.
/// Throws when the sequence count exceeds the budget.
DppSolution dpp_enumeration_solver(const DiscreteInstance& inst, int t_index,
                                   const InstanceLaw& law, double budget = 2e6);

/// |V(t) - max over first-segment actions of [rewards + V(s)]| with both
/// sides enumerated; identically zero on exact instances.
double dpp_consistency(const DiscreteInstance& inst, int t_index, int s_index,
                       const InstanceLaw& law, double budget = 2e6);

struct ConvergenceRow {
    double epsilon = 0.0;
    double occupancy_ratio_error = 0.0;   // |l(w)/l(w') - v_w/v_w'| within block 1
    double occupancy_se = 0.0;            // across the seed batch
    double value_gap = 0.0;               // sup over probes |u_eps - u_bar|
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
};

struct ConvergenceProbe {
    double t = 0.0;
    DiscreteLawS m;
    ChainLaw l;                            // on the full state space
};

/// Simulates the epsilon-chains and compares within-block occupancy ratios
/// against the fast-block stationary ratio; evaluates the candidate value
/// gap against the limit candidate on the probe set.
ConvergenceTable two_scale_convergence(const TradingExampleSpec& spec,
                                       const std::vector<double>& epsilons,
                                       const std::vector<ConvergenceProbe>& probes,
                                       int sim_steps = 100000, int seeds = 10,
                                       std::uint64_t seed0 = 1234);

} // namespace mfs

#endif
