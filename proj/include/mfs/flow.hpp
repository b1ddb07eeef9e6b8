#ifndef MFS_FLOW_HPP
#define MFS_FLOW_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "mfs/chain.hpp"
#include "mfs/common.hpp"
#include "mfs/measure.hpp"
#include "mfs/model.hpp"

namespace mfs {

/// Intervention rule applied at selected grid times.
struct SwitchPolicy {
    enum class Kind { None, Threshold, KernelSequence };

    Kind kind = Kind::None;

    // Threshold: relabel mode i when <psi, m(., i)> exceeds a_i(q), moving
    // just enough mass that the moment lands on the threshold. Thresholds are
    // read per particle from its own chain state.
    ScalarFn psi;
    std::vector<double> a1, a0;     // per chain state
    std::vector<double> times;      // when to intervene; empty = every step

    // KernelSequence: explicit kernels at explicit times. Kernel rows are
    // indexed per mode (shared by all atoms of that mode).
    struct TimedKernel {
        double time = 0.0;
        std::vector<Vec> row_per_mode;
    };
    std::vector<TimedKernel> kernels;

    static SwitchPolicy none() { return {}; }
};

struct SwitchEvent {
    double time = 0.0;
    int particle = -1;
    int from_mode = 0;
    int to_mode = 0;
    Vec x;
    double cost = 0.0;              // g_ij(t, x), not yet divided by N
};

struct SimulationSpec {
    CoefficientSet coeffs;
    RateFunction rates;
    CostMatrix costs;
    SwitchPolicy policy;
    DiscreteLawS m0;
    ChainLaw l0;
    int particles = 1000;
    double dt = 1e-2;
    double t0 = 0.0;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    int threads = 1;
    int martingale_windows = 10;
};

/// Hook invoked while the particle system advances. State arrays are frozen
/// snapshots taken at the indicated stage of the step.
class FlowObserver {
public:
    virtual ~FlowObserver() = default;
    /// After interventions and chain jumps, before diffusion. bq/sq are the
    /// per-particle drift and diagonal diffusion actually applied over
    /// [t, t+dt).
    virtual void step(double t, double dt, const std::vector<Vec>& x,
                      const std::vector<int>& mode, const std::vector<int>& alpha,
                      const DiscreteLawS& m, const ChainLaw& l,
                      const std::vector<Vec>& bq, const std::vector<Vec>& sq) = 0;
    /// Measure jump produced by an intervention at time t.
    virtual void measure_jump(double t, const DiscreteLawS& before,
                              const DiscreteLawS& after, const ChainLaw& l) = 0;
    virtual void finished(double /*t*/, const DiscreteLawS& /*m*/, const ChainLaw& /*l*/) {}
};

/// Result summary of one interacting-particle run. Per-step snapshots keep
/// the empirical chain law and the running-reward series; full particle
/// states are kept at the start, the end, and around every intervention.
struct EnsembleFlow {
    SimulationSpec spec;

    std::vector<double> times;              // grid, size steps+1
    std::vector<ChainLaw> chain_laws;       // per grid point
    std::vector<double> mean_running;       // (1/N) sum f at grid point
    std::vector<SwitchEvent> events;

    DiscreteLawS m_initial;                 // before any time-0 intervention
    DiscreteLawS m_final;
    double terminal_reward = 0.0;           // (1/N) sum h at T

    struct JumpSnapshot {
        double time = 0.0;
        DiscreteLawS before, after;
    };
    std::vector<JumpSnapshot> jumps;

    // Per-particle state at martingale-window boundaries.
    struct WindowStats {
        double time = 0.0;
        std::vector<Vec> x;
        std::vector<Vec> drift_integral;
        std::vector<Vec> sigma2_integral;
    };
    std::vector<WindowStats> windows;

    double total_switch_cost() const;
};

EnsembleFlow simulate(const SimulationSpec& spec);
EnsembleFlow simulate(const SimulationSpec& spec, FlowObserver* observer);

struct GainEstimate {
    double value = 0.0;
    double std_error = 0.0;     // MC error of the terminal term
    double running_integral = 0.0;
    double terminal = 0.0;
    double switch_cost = 0.0;
};

/// Terminal reward plus trapezoid running-reward integral minus the logged
/// switching costs.
GainEstimate gain(const EnsembleFlow& flow);

/// Value without switching: the same dynamics run under the empty policy.
GainEstimate no_switch_value(const CoefficientSet& coeffs, const RateFunction& rates,
                             const DiscreteLawS& m0, const ChainLaw& l0, double t,
                             int particles, double dt, std::uint64_t seed);

struct MartingaleWindow {
    double t_start = 0.0, t_end = 0.0;
    double mean = 0.0, se = 0.0;            // drift-corrected increment mean
    double slope = 0.0, slope_se = 0.0;     // regression on window-start state
    double qv_mean = 0.0, qv_se = 0.0;      // squared-increment counterpart
};

struct MartingaleReport {
    std::vector<MartingaleWindow> windows;
    double max_abs_mean = 0.0;
    double max_abs_mean_se = 0.0;
    /// Largest |mean| / se across windows (drift part).
    double max_z = 0.0;
};

/// Tests the martingale property of M = X - int b dr and N = M^2 - int s^2 dr
/// window by window, regressing increments on the window-start state.
MartingaleReport martingale_residual(const EnsembleFlow& flow);

} // namespace mfs

#endif
