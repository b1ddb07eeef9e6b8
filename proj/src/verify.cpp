#include "mfs/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfs/rng.hpp"

namespace mfs {

namespace {

/// Accumulates every term of the change-of-variables formula along a replayed
/// flow.
class ItoObserver : public FlowObserver {
public:
    ItoObserver(const CylindricalFunctional& u, const RateFunction& rf)
        : u_(u), rf_(rf) {}

    void step(double t, double dt, const std::vector<Vec>& x, const std::vector<int>& mode,
              const std::vector<int>& alpha, const DiscreteLawS& m, const ChainLaw& l,
              const std::vector<Vec>& bq, const std::vector<Vec>& sq) override {
        const Vec v = u_.moments(m);
        if (u_.near_kink(v)) {
            std::ostringstream os;
            os << "moment path crosses a kink at t=" << t;
            throw NumericError("ito_check: " + os.str());
        }

        time_jump += (u_.time_derivative(t, v, l) + generator_Q(u_, t, m, l, rf_)) * dt;

        // Outer gradients are shared across particles; only the psi
        // derivatives vary along the support.
        const int n_states = l.size();
        std::vector<Vec> gphi(n_states);
        for (int q = 0; q < n_states; ++q) gphi[q] = u_.outer_gradient(t, v, q);

        const int N = static_cast<int>(x.size());
        const auto& basis = u_.basis();
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
            const Vec& g = gphi[alpha[n]];
            double term = 0.0;
            for (int j = 0; j < u_.n_moments(); ++j) {
                if (basis[j].mode != mode[n] || g[j] == 0.0) continue;
                const Vec pgrad = basis[j].psi.grad(x[n]);
                const Vec phess = basis[j].psi.hess_diag(x[n]);
                double piece = pgrad.dot(bq[n]);
                for (int c = 0; c < x[n].size(); ++c)
                    piece += 0.5 * sq[n][c] * sq[n][c] * phess[c];
                term += g[j] * piece;
            }
            acc += term;
        }
        drift_diffusion += acc / N * dt;

        // Per-path jumps off the measure-jump set: mode changes that did not
        // come with an intervention. The spatial component is continuous, so
        // only the linear derivative in y can jump.
        if (!prev_mode.empty()) {
            const bool at_measure_jump = last_jump_time_set && last_jump_time == t;
            if (!at_measure_jump) {
                const Vec g = u_.outer_gradient_law(t, v, l);
                double jacc = 0.0;
                for (int n = 0; n < N; ++n) {
                    if (prev_mode[n] == mode[n]) continue;
                    double before = 0.0, after = 0.0;
                    for (int j = 0; j < u_.n_moments(); ++j) {
                        if (u_.basis()[j].mode == mode[n]) after += g[j] * u_.basis()[j].psi(x[n]);
                        if (u_.basis()[j].mode == prev_mode[n])
                            before += g[j] * u_.basis()[j].psi(x[n]);
                    }
                    jacc += after - before;
                }
                path_jump += jacc / N;
            }
        }
        prev_mode = mode;
    }

    void measure_jump(double t, const DiscreteLawS& before, const DiscreteLawS& after,
                      const ChainLaw& l) override {
        measure += u_.eval(t, after, l) - u_.eval(t, before, l);
        last_jump_time = t;
        last_jump_time_set = true;
    }

    double time_jump = 0.0;
    double drift_diffusion = 0.0;
    double measure = 0.0;
    double path_jump = 0.0;

private:
    const CylindricalFunctional& u_;
    const RateFunction& rf_;
    std::vector<int> prev_mode;
    double last_jump_time = 0.0;
    bool last_jump_time_set = false;
};

} // namespace

ItoReport ito_check(const CylindricalFunctional& u, const EnsembleFlow& flow,
                    const CoefficientSet& coeffs, const RateFunction& rf,
                    double budget_constant) {
    (void)coeffs;   // the replay carries its own coefficient set
    ItoObserver obs(u, rf);
    // Deterministic replay of the stored run.
    const EnsembleFlow replay = simulate(flow.spec, &obs);

    ItoReport rep;
    const double t0 = flow.spec.t0;
    const double T = flow.spec.horizon;
    rep.lhs = u.eval(T, replay.m_final, replay.chain_laws.back()) -
              u.eval(t0, replay.m_initial, replay.chain_laws.front());
    rep.time_and_jump_term = obs.time_jump;
    rep.drift_diffusion_term = obs.drift_diffusion;
    rep.measure_jump_term = obs.measure;
    rep.path_jump_term = obs.path_jump;
    rep.rhs = rep.time_and_jump_term + rep.drift_diffusion_term + rep.measure_jump_term +
              rep.path_jump_term;
    rep.residual = std::abs(rep.lhs - rep.rhs);
    rep.error_budget = budget_constant *
                       (flow.spec.dt + 1.0 / std::sqrt(static_cast<double>(
                                           flow.spec.particles)));
    rep.ok = rep.residual <= rep.error_budget;
    return rep;
}

ValidationReport DiscreteInstance::validate() const {
    if (x_grid.empty() || x_grid.size() > 5)
        return ValidationReport::fail("x grid must hold 1..5 points");
    if (n_modes < 1 || n_modes > 2) return ValidationReport::fail("modes must be 1..2");
    if (n_states < 1 || n_states > 2)
        return ValidationReport::fail("chain states must be 1..2");
    if (steps < 1 || steps > 5) return ValidationReport::fail("steps must be 1..5");
    const int G = static_cast<int>(x_grid.size());
    if (static_cast<int>(x_step.size()) != n_modes * n_states)
        return ValidationReport::fail("one x kernel required per (mode, state)");
    for (const auto& K : x_step) {
        if (K.rows() != G || K.cols() != G)
            return ValidationReport::fail("x kernel has wrong shape");
        for (int r = 0; r < G; ++r) {
            double s = 0.0;
            for (int c = 0; c < G; ++c) {
                if (K(r, c) < -1e-12) return ValidationReport::fail("negative x kernel entry");
                s += K(r, c);
            }
            if (std::abs(s - 1.0) > 1e-9)
                return ValidationReport::fail("x kernel row not stochastic");
        }
    }
    if (chain_step.rows() != n_states || chain_step.cols() != n_states)
        return ValidationReport::fail("chain step has wrong shape");
    for (int r = 0; r < n_states; ++r) {
        double s = 0.0;
        for (int c = 0; c < n_states; ++c) {
            if (chain_step(r, c) < -1e-12)
                return ValidationReport::fail("negative chain step entry");
            s += chain_step(r, c);
        }
        if (std::abs(s - 1.0) > 1e-9)
            return ValidationReport::fail("chain step row not stochastic");
    }
    if (actions.empty()) return ValidationReport::fail("empty action menu");
    for (const auto& a : actions) {
        if (static_cast<int>(a.rows.size()) != cells())
            return ValidationReport::fail("action must hold one row per cell");
        for (const auto& row : a.rows) {
            if (row.size() != n_modes) return ValidationReport::fail("bad action row size");
            double s = 0.0;
            for (int j = 0; j < row.size(); ++j) {
                if (row[j] < -1e-12 || row[j] > 1.0 + 1e-12)
                    return ValidationReport::fail("action fraction outside [0,1]");
                s += row[j];
            }
            if (std::abs(s - 1.0) > 1e-9)
                return ValidationReport::fail("action row not stochastic");
        }
    }
    if (static_cast<int>(f_table.size()) != steps * n_states * cells())
        return ValidationReport::fail("f table has wrong size");
    if (static_cast<int>(h_table.size()) != n_states * cells())
        return ValidationReport::fail("h table has wrong size");
    auto rep = validate_costs(costs, default_time_grid(steps * dt), x_grid);
    if (!rep.ok) return ValidationReport::fail("cost table: " + rep.message);
    return ValidationReport::pass();
}

double DiscreteInstance::sequence_count(int from_step) const {
    double c = 1.0;
    for (int k = from_step; k < steps; ++k) c *= static_cast<double>(actions.size());
    return c;
}

DiscreteLawS InstanceLaw::marginal_m(const DiscreteInstance& inst) const {
    DiscreteLawS m;
    m.n_modes = inst.n_modes;
    const int G = static_cast<int>(inst.x_grid.size());
    for (int xi = 0; xi < G; ++xi) {
        for (int i = 0; i < inst.n_modes; ++i) {
            double w = 0.0;
            for (int q = 0; q < inst.n_states; ++q)
                w += weights[inst.cell(xi, i) * inst.n_states + q];
            if (w > 0.0) m.atoms.push_back({inst.x_grid[xi], i, w});
        }
    }
    return m;
}

ChainLaw InstanceLaw::marginal_l(const DiscreteInstance& inst) const {
    Vec l = Vec::Zero(inst.n_states);
    for (int c = 0; c < inst.cells(); ++c)
        for (int q = 0; q < inst.n_states; ++q) l[q] += weights[c * inst.n_states + q];
    return ChainLaw(std::move(l));
}

InstanceLaw make_instance_law(const DiscreteInstance& inst, const DiscreteLawS& m,
                              const ChainLaw& l) {
    // Product coupling of the marginals; atoms must sit on the grid.
    InstanceLaw law;
    law.weights = Vec::Zero(inst.cells() * inst.n_states);
    for (const auto& atom : m.atoms) {
        int xi = -1;
        for (int g = 0; g < static_cast<int>(inst.x_grid.size()); ++g)
            if ((inst.x_grid[g] - atom.x).lpNorm<Eigen::Infinity>() <= 1e-12) {
                xi = g;
                break;
            }
        require(xi >= 0, "make_instance_law: atom off the spatial grid");
        for (int q = 0; q < inst.n_states; ++q)
            law.weights[inst.cell(xi, atom.mode) * inst.n_states + q] +=
                atom.weight * l(q);
    }
    return law;
}

namespace {

struct InstanceStep {
    Vec weights;        // evolved joint law
    double reward;      // F dt - switch cost at this step
};

InstanceStep instance_step(const DiscreteInstance& inst, int k, const Vec& w, int action) {
    const int G = static_cast<int>(inst.x_grid.size());
    const int nm = inst.n_modes;
    const int ns = inst.n_states;
    const double t = k * inst.dt;
    const auto& act = inst.actions[action];

    // Intervene: relabel mode mass cell by cell, pay the law-level cost.
    Vec wk = Vec::Zero(w.size());
    double cost = 0.0;
    for (int xi = 0; xi < G; ++xi) {
        for (int i = 0; i < nm; ++i) {
            const int c = inst.cell(xi, i);
            const Vec& row = act.rows[c];
            for (int q = 0; q < ns; ++q) {
                const double mass = w[c * ns + q];
                if (mass == 0.0) continue;
                for (int j = 0; j < nm; ++j) {
                    const double p = row[j];
                    if (p == 0.0) continue;
                    wk[inst.cell(xi, j) * ns + q] += mass * p;
                    if (j != i) cost += mass * p * inst.costs.cost(i, j, t, inst.x_grid[xi]);
                }
            }
        }
    }

    // Running reward on the post-intervention marginals.
    Vec lmarg = Vec::Zero(ns);
    for (int c = 0; c < inst.cells(); ++c)
        for (int q = 0; q < ns; ++q) lmarg[q] += wk[c * ns + q];
    double F = 0.0;
    for (int q = 0; q < ns; ++q) {
        if (lmarg[q] == 0.0) continue;
        double inner = 0.0;
        for (int c = 0; c < inst.cells(); ++c) {
            double mc = 0.0;
            for (int qq = 0; qq < ns; ++qq) mc += wk[c * ns + qq];
            inner += mc * inst.f(k, q, c);
        }
        F += lmarg[q] * inner;
    }

    // Chain step, independent of the cell.
    Vec wc = Vec::Zero(w.size());
    for (int c = 0; c < inst.cells(); ++c)
        for (int q = 0; q < ns; ++q) {
            const double mass = wk[c * ns + q];
            if (mass == 0.0) continue;
            for (int q2 = 0; q2 < ns; ++q2)
                wc[c * ns + q2] += mass * inst.chain_step(q, q2);
        }

    // Spatial step per (mode, chain state).
    Vec wx = Vec::Zero(w.size());
    for (int xi = 0; xi < G; ++xi)
        for (int i = 0; i < nm; ++i)
            for (int q = 0; q < ns; ++q) {
                const double mass = wc[inst.cell(xi, i) * ns + q];
                if (mass == 0.0) continue;
                const Mat& K = inst.x_step[i * ns + q];
                for (int x2 = 0; x2 < G; ++x2)
                    wx[inst.cell(x2, i) * ns + q] += mass * K(xi, x2);
            }

    return {std::move(wx), F * inst.dt - cost};
}

double terminal_value(const DiscreteInstance& inst, const Vec& w) {
    const int ns = inst.n_states;
    Vec lmarg = Vec::Zero(ns);
    for (int c = 0; c < inst.cells(); ++c)
        for (int q = 0; q < ns; ++q) lmarg[q] += w[c * ns + q];
    double H = 0.0;
    for (int q = 0; q < ns; ++q) {
        if (lmarg[q] == 0.0) continue;
        double inner = 0.0;
        for (int c = 0; c < inst.cells(); ++c) {
            double mc = 0.0;
            for (int qq = 0; qq < ns; ++qq) mc += w[c * ns + qq];
            inner += mc * inst.h(q, c);
        }
        H += lmarg[q] * inner;
    }
    return H;
}

// Depth-first maximization with rewards folded backwards, so subproblem
// values are reproduced bit-for-bit by any split of the horizon.
double enumerate_value(const DiscreteInstance& inst, int k, const Vec& w,
                       std::vector<int>* best_actions) {
    if (k == inst.steps) return terminal_value(inst, w);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> best_tail;
    int best_a = -1;
    for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a) {
        InstanceStep st = instance_step(inst, k, w, a);
        std::vector<int> tail;
        const double v =
            st.reward + enumerate_value(inst, k + 1, st.weights,
                                        best_actions ? &tail : nullptr);
        if (v > best) {
            best = v;
            best_a = a;
            best_tail = std::move(tail);
        }
    }
    if (best_actions) {
        best_actions->clear();
        best_actions->push_back(best_a);
        best_actions->insert(best_actions->end(), best_tail.begin(), best_tail.end());
    }
    return best;
}

} // namespace

DppSolution dpp_enumeration_solver(const DiscreteInstance& inst, int t_index,
                                   const InstanceLaw& law, double budget) {
    auto rep = inst.validate();
    require(rep.ok, "dpp_enumeration_solver: " + rep.message);
    require(t_index >= 0 && t_index <= inst.steps, "dpp_enumeration_solver: bad time index");
    if (inst.sequence_count(t_index) > budget)
        throw NumericError("dpp_enumeration_solver: combinatorial budget exceeded");
    DppSolution sol;
    sol.value = enumerate_value(inst, t_index, law.weights, &sol.actions);
    return sol;
}

namespace {

double split_value(const DiscreteInstance& inst, int k, int s, const Vec& w) {
    if (k == s) return enumerate_value(inst, k, w, nullptr);
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < static_cast<int>(inst.actions.size()); ++a) {
        InstanceStep st = instance_step(inst, k, w, a);
        best = std::max(best, st.reward + split_value(inst, k + 1, s, st.weights));
    }
    return best;
}

} // namespace

double dpp_consistency(const DiscreteInstance& inst, int t_index, int s_index,
                       const InstanceLaw& law, double budget) {
    require(t_index <= s_index && s_index <= inst.steps,
            "dpp_consistency: need t <= s <= horizon");
    if (inst.sequence_count(t_index) > budget)
        throw NumericError("dpp_consistency: combinatorial budget exceeded");
    const double full = enumerate_value(inst, t_index, law.weights, nullptr);
    const double split = split_value(inst, t_index, s_index, law.weights);
    return std::abs(full - split);
}

ConvergenceTable two_scale_convergence(const TradingExampleSpec& spec,
                                       const std::vector<double>& epsilons,
                                       const std::vector<ConvergenceProbe>& probes,
                                       int sim_steps, int seeds, std::uint64_t seed0) {
    require(spec.states == 4, "two_scale_convergence: four-state layout required");
    for (std::size_t i = 1; i < epsilons.size(); ++i)
        require(epsilons[i] < epsilons[i - 1],
                "two_scale_convergence: epsilons must decrease");

    TwoScaleSpec ts = spec.two_scale();
    const ChainLaw v1 = stationary_distribution(ts.fast[0]);
    const double target = v1(0) / v1(1);    // lam2 / lam1

    // The limit candidate needs block-constant thresholds; otherwise the gap
    // reported is against the first-state-in-block thresholds.
    TradingExampleSpec two;
    two.horizon = spec.horizon;
    two.psi = spec.psi;
    two.states = 2;
    two.mu1 = spec.mu1;
    two.mu2 = spec.mu2;
    two.a1 = {spec.a1[0], spec.a1[2]};
    two.a0 = {spec.a0[0], spec.a0[2]};

    ConvergenceTable table;
    for (double eps : epsilons) {
        ts.epsilon = eps;
        const GeneratorMatrix gen = build_epsilon_generator(ts);
        double max_diag = 0.0;
        for (int p = 0; p < gen.size(); ++p)
            max_diag = std::max(max_diag, std::abs(gen(p, p)));
        const double dt = 0.4 / max_diag;

        // Common random numbers across the epsilon rows sharpen the
        // monotonicity comparison.
        double sum = 0.0, sumsq = 0.0;
        for (int s = 0; s < seeds; ++s) {
            const ChainPath path = sample_chain_path(
                gen, ChainLaw::uniform(4), sim_steps * dt, dt,
                mix_seed(seed0, static_cast<std::uint64_t>(s)));
            const double o0 = path.occupancy[0];
            const double o1 = path.occupancy[1];
            const double err =
                o1 > 0.0 ? std::abs(o0 / o1 - target)
                         : std::abs(target);
            sum += err;
            sumsq += err * err;
        }
        ConvergenceRow row;
        row.epsilon = eps;
        row.occupancy_ratio_error = sum / seeds;
        row.occupancy_se = seeds > 1 ? std::sqrt(std::max(0.0, (sumsq / seeds -
                                                                row.occupancy_ratio_error *
                                                                    row.occupancy_ratio_error) /
                                                               (seeds - 1)))
                                     : 0.0;

        double gap = 0.0;
        for (const auto& probe : probes) {
            const double ue = example_value(spec, probe.t, probe.m, probe.l);
            const ChainLaw lbar = aggregate_chain_law(ts, probe.l);
            const double ub = example_value(two, probe.t, probe.m, lbar);
            gap = std::max(gap, std::abs(ue - ub));
        }
        row.value_gap = gap;
        table.rows.push_back(row);
    }
    return table;
}

} // namespace mfs
