#include "mfs/flow.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "mfs/rng.hpp"

namespace mfs {

namespace {

struct ParticleState {
    std::vector<Vec> x;
    std::vector<int> mode;
    std::vector<int> alpha;
};

DiscreteLawS empirical_law(const ParticleState& s, int n_modes) {
    DiscreteLawS m;
    m.n_modes = n_modes;
    const double w = 1.0 / static_cast<double>(s.x.size());
    m.atoms.reserve(s.x.size());
    for (std::size_t n = 0; n < s.x.size(); ++n) m.atoms.push_back({s.x[n], s.mode[n], w});
    return m;
}

ChainLaw empirical_chain_law(const ParticleState& s, int n_states) {
    Vec w = Vec::Zero(n_states);
    for (int a : s.alpha) w[a] += 1.0;
    w /= static_cast<double>(s.alpha.size());
    return ChainLaw(std::move(w));
}

bool policy_active(const SwitchPolicy& policy, double t, double dt, double horizon) {
    if (policy.kind == SwitchPolicy::Kind::None) return false;
    if (t >= horizon - 1e-12) return false;     // never intervene at the horizon
    if (policy.kind == SwitchPolicy::Kind::Threshold) {
        if (policy.times.empty()) return true;
        for (double s : policy.times)
            if (std::abs(s - t) < 0.5 * dt) return true;
        return false;
    }
    for (const auto& tk : policy.kernels)
        if (std::abs(tk.time - t) < 0.5 * dt) return true;
    return false;
}

} // namespace

double EnsembleFlow::total_switch_cost() const {
    double s = 0.0;
    for (const auto& e : events) s += e.cost;
    return s / static_cast<double>(spec.particles);
}

EnsembleFlow simulate(const SimulationSpec& spec) { return simulate(spec, nullptr); }

EnsembleFlow simulate(const SimulationSpec& spec, FlowObserver* observer) {
    require(spec.dt > 0.0, "simulate: dt must be positive");
    require(spec.particles >= 1, "simulate: need at least one particle");
    auto rep_m = validate_law(spec.m0);
    require(rep_m.ok, "simulate: invalid initial law: " + rep_m.message);
    require(spec.horizon > spec.t0, "simulate: empty time window");

    const int N = spec.particles;
    const int n_modes = spec.m0.n_modes;
    const int n_states = spec.l0.size();
    const int steps =
        static_cast<int>(std::llround((spec.horizon - spec.t0) / spec.dt));
    const int dim = spec.m0.dim();

    EnsembleFlow flow;
    flow.spec = spec;
    flow.times.reserve(steps + 1);
    flow.chain_laws.reserve(steps + 1);
    flow.mean_running.reserve(steps + 1);

    // Per-particle substreams derived from the master seed keep runs
    // reproducible independent of the thread count.
    std::vector<Rng> rngs;
    rngs.reserve(N);
    for (int n = 0; n < N; ++n) rngs.emplace_back(mix_seed(spec.seed, n));

    ParticleState state;
    state.x.resize(N);
    state.mode.resize(N);
    state.alpha.resize(N);
    for (int n = 0; n < N; ++n) {
        std::vector<double> w(spec.m0.atoms.size());
        for (std::size_t a = 0; a < w.size(); ++a) w[a] = spec.m0.atoms[a].weight;
        const int a = rngs[n].categorical(w, static_cast<int>(w.size()));
        state.x[n] = spec.m0.atoms[a].x;
        state.mode[n] = spec.m0.atoms[a].mode;
        state.alpha[n] = rngs[n].categorical(spec.l0.weights, n_states);
    }

    flow.m_initial = empirical_law(state, n_modes);

    const int window_stride =
        std::max(1, steps / std::max(1, spec.martingale_windows));
    std::vector<Vec> drift_int(N, Vec::Zero(dim));
    std::vector<Vec> sigma2_int(N, Vec::Zero(dim));
    auto push_window = [&](double t) {
        EnsembleFlow::WindowStats ws;
        ws.time = t;
        ws.x = state.x;
        ws.drift_integral = drift_int;
        ws.sigma2_integral = sigma2_int;
        flow.windows.push_back(std::move(ws));
    };
    push_window(spec.t0);

    std::vector<Vec> bq(N), sq(N);
    const int threads = std::max(1, spec.threads);

    for (int k = 0; k <= steps; ++k) {
        const double t = spec.t0 + k * spec.dt;
        DiscreteLawS m = empirical_law(state, n_modes);
        ChainLaw l = empirical_chain_law(state, n_states);

        // 1) Intervene.
        if (k < steps && policy_active(spec.policy, t, spec.dt, spec.horizon)) {
            const DiscreteLawS before = m;
            bool changed = false;
            if (spec.policy.kind == SwitchPolicy::Kind::Threshold) {
                // Per (mode, own-chain-state) group: relabel enough mass that
                // the psi-moment falls back to the threshold.
                const double v1 = mode_moment(m, 1, spec.policy.psi);
                const double v0 = mode_moment(m, 0, spec.policy.psi);
                for (int n = 0; n < N; ++n) {
                    const int q = state.alpha[n];
                    const int i = state.mode[n];
                    const double v = i == 1 ? v1 : v0;
                    const double a = i == 1 ? spec.policy.a1[q] : spec.policy.a0[q];
                    if (v <= a) continue;
                    const double frac = 1.0 - a / v;
                    if (rngs[n].uniform() < frac) {
                        const int j = 1 - i;
                        const double c = spec.costs.cost(i, j, t, state.x[n]);
                        flow.events.push_back({t, n, i, j, state.x[n], c});
                        state.mode[n] = j;
                        changed = true;
                    }
                }
            } else {
                for (const auto& tk : spec.policy.kernels) {
                    if (std::abs(tk.time - t) >= 0.5 * spec.dt) continue;
                    for (int n = 0; n < N; ++n) {
                        const Vec& row = tk.row_per_mode[state.mode[n]];
                        const int j = rngs[n].categorical(row, n_modes);
                        if (j == state.mode[n]) continue;
                        const double c =
                            spec.costs.cost(state.mode[n], j, t, state.x[n]);
                        flow.events.push_back({t, n, state.mode[n], j, state.x[n], c});
                        state.mode[n] = j;
                        changed = true;
                    }
                }
            }
            if (changed) {
                const DiscreteLawS after = empirical_law(state, n_modes);
                flow.jumps.push_back({t, before, after});
                if (observer) observer->measure_jump(t, before, after, l);
                m = after;
            }
        }

        // 2) Chain jumps at the measure-coupled rates, frozen over the step;
        // they land at t together with the interventions.
        if (k < steps) {
            const GeneratorMatrix gen = extended_rates(spec.rates, m);
            double max_diag = 0.0;
            for (int p = 0; p < n_states; ++p)
                max_diag = std::max(max_diag, std::abs(gen(p, p)));
            if (spec.dt * max_diag > 0.5)
                throw NumericError("simulate: dt * max|lambda_pp| exceeds 1/2");
            for (int n = 0; n < N; ++n) {
                const int p = state.alpha[n];
                std::vector<double> probs(n_states);
                double stay = 1.0;
                for (int q = 0; q < n_states; ++q) {
                    if (q == p) continue;
                    probs[q] = gen(p, q) * spec.dt;
                    stay -= probs[q];
                }
                probs[p] = stay;
                state.alpha[n] = rngs[n].categorical(probs, n_states);
            }
            l = empirical_chain_law(state, n_states);
        }

        flow.times.push_back(t);
        flow.chain_laws.push_back(l);
        const CoeffCache cache(spec.coeffs, t, m);
        {
            double fr = 0.0;
            for (int n = 0; n < N; ++n)
                fr += cache.f(state.alpha[n], state.x[n], state.mode[n]);
            flow.mean_running.push_back(fr / N);
        }

        if (k == steps) {
            flow.m_final = m;
            double h = 0.0;
            for (int n = 0; n < N; ++n)
                h += cache.h(state.alpha[n], state.x[n], state.mode[n]);
            flow.terminal_reward = h / N;
            if (observer) observer->finished(t, m, l);
            break;
        }

        // 3) Diffuse with coefficients at the frozen snapshot.
        auto diffuse_range = [&](int lo, int hi) {
            for (int n = lo; n < hi; ++n) {
                bq[n] = cache.drift(state.alpha[n], state.x[n], state.mode[n]);
                sq[n] = cache.sigma(state.alpha[n], state.x[n], state.mode[n]);
            }
        };
        if (threads > 1 && N >= 4 * threads) {
            std::vector<std::thread> pool;
            const int chunk = (N + threads - 1) / threads;
            for (int c = 0; c < threads; ++c) {
                const int lo = c * chunk, hi = std::min(N, lo + chunk);
                if (lo < hi) pool.emplace_back(diffuse_range, lo, hi);
            }
            for (auto& th : pool) th.join();
        } else {
            diffuse_range(0, N);
        }

        if (observer)
            observer->step(t, spec.dt, state.x, state.mode, state.alpha, m, l, bq, sq);

        const double sqdt = std::sqrt(spec.dt);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < dim; ++c) {
                const double dw = sq[n][c] != 0.0 ? rngs[n].normal() * sqdt : 0.0;
                state.x[n][c] += bq[n][c] * spec.dt + sq[n][c] * dw;
                drift_int[n][c] += bq[n][c] * spec.dt;
                sigma2_int[n][c] += sq[n][c] * sq[n][c] * spec.dt;
            }
        }

        if ((k + 1) % window_stride == 0 || k + 1 == steps)
            push_window(spec.t0 + (k + 1) * spec.dt);
    }

    return flow;
}

GainEstimate gain(const EnsembleFlow& flow) {
    GainEstimate out;
    // Trapezoid rule over the stored running-reward series.
    const auto& ts = flow.times;
    const auto& fr = flow.mean_running;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k)
        out.running_integral += 0.5 * (fr[k] + fr[k + 1]) * (ts[k + 1] - ts[k]);
    out.terminal = flow.terminal_reward;
    out.switch_cost = flow.total_switch_cost();
    out.value = out.terminal + out.running_integral - out.switch_cost;

    // MC error proxy from the terminal cross-sectional spread.
    const auto& m = flow.m_final;
    if (!m.atoms.empty()) {
        double mean = 0.0, sq = 0.0;
        for (const auto& a : m.atoms) {
            const double y = a.x.size() > 0 ? a.x[0] : 0.0;
            mean += a.weight * y;
            sq += a.weight * y * y;
        }
        const double var = std::max(0.0, sq - mean * mean);
        out.std_error = std::sqrt(var / static_cast<double>(flow.spec.particles));
    }
    return out;
}

GainEstimate no_switch_value(const CoefficientSet& coeffs, const RateFunction& rates,
                             const DiscreteLawS& m0, const ChainLaw& l0, double t,
                             int particles, double dt, std::uint64_t seed) {
    SimulationSpec spec;
    spec.coeffs = coeffs;
    spec.rates = rates;
    spec.costs = CostMatrix::constant(m0.n_modes, 1.0);
    spec.policy = SwitchPolicy::none();
    spec.m0 = m0;
    spec.l0 = l0;
    spec.particles = particles;
    spec.dt = dt;
    spec.t0 = t;
    spec.horizon = coeffs.horizon;
    spec.seed = seed;
    return gain(simulate(spec));
}

MartingaleReport martingale_residual(const EnsembleFlow& flow) {
    MartingaleReport report;
    const auto& ws = flow.windows;
    const int N = flow.spec.particles;
    if (ws.size() < 2 || N < 4) return report;

    for (std::size_t w = 0; w + 1 < ws.size(); ++w) {
        const auto& a = ws[w];
        const auto& b = ws[w + 1];
        MartingaleWindow row;
        row.t_start = a.time;
        row.t_end = b.time;

        // First coordinate carries the statistics; the catalog is
        // effectively one-dimensional.
        double mean = 0.0, var = 0.0;
        double sx = 0.0, sxx = 0.0, sxy = 0.0;
        double qv_mean = 0.0, qv_var = 0.0;
        std::vector<double> dm(N), dn(N);
        for (int n = 0; n < N; ++n) {
            const double ma = a.x[n][0] - a.drift_integral[n][0];
            const double mb = b.x[n][0] - b.drift_integral[n][0];
            dm[n] = mb - ma;
            const double na = ma * ma - a.sigma2_integral[n][0];
            const double nb = mb * mb - b.sigma2_integral[n][0];
            dn[n] = nb - na;
        }
        for (int n = 0; n < N; ++n) {
            mean += dm[n];
            qv_mean += dn[n];
            sx += a.x[n][0];
        }
        mean /= N;
        qv_mean /= N;
        sx /= N;
        for (int n = 0; n < N; ++n) {
            var += (dm[n] - mean) * (dm[n] - mean);
            qv_var += (dn[n] - qv_mean) * (dn[n] - qv_mean);
            sxx += (a.x[n][0] - sx) * (a.x[n][0] - sx);
            sxy += (a.x[n][0] - sx) * (dm[n] - mean);
        }
        var /= (N - 1);
        qv_var /= (N - 1);
        row.mean = mean;
        row.se = std::sqrt(var / N);
        row.qv_mean = qv_mean;
        row.qv_se = std::sqrt(qv_var / N);
        if (sxx > 1e-12) {
            row.slope = sxy / sxx;
            const double resid_var =
                std::max(0.0, var - row.slope * row.slope * sxx / (N - 1));
            row.slope_se = std::sqrt(resid_var / sxx);
        }
        report.windows.push_back(row);

        if (std::abs(row.mean) > report.max_abs_mean) {
            report.max_abs_mean = std::abs(row.mean);
            report.max_abs_mean_se = row.se;
        }
        if (row.se > 0.0)
            report.max_z = std::max(report.max_z, std::abs(row.mean) / row.se);
    }
    return report;
}

} // namespace mfs
