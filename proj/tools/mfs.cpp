#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mfs/config.hpp"
#include "mfs/csv.hpp"
#include "mfs/rng.hpp"
#include "mfs/verify.hpp"

namespace fs = std::filesystem;
using namespace mfs;

namespace {

struct CliRun {
    RunConfig cfg;
    fs::path out;
    std::string command;
    std::vector<std::string> artifacts;

    CsvWriter writer(const std::string& name) {
        artifacts.push_back(name);
        return CsvWriter((out / name).string());
    }

    void manifest() {
        Json j;
        j["command"] = command;
        j["config_hash"] = config_hash(cfg.source_text);
        j["seed"] = cfg.seed;
        j["prng"] = "mt19937_64+boxmuller";
        j["threads"] = cfg.threads;
        j["artifacts"] = artifacts;
        std::ofstream os(out / "run_manifest.json");
        os << j.dump(2) << "\n";
    }
};

const TradingExampleSpec& need_trading(const RunConfig& cfg) {
    require(cfg.trading.has_value(), "config needs a model.trading section");
    return *cfg.trading;
}

SwitchPolicy policy_from_config(const RunConfig& cfg, const TradingExampleSpec& spec) {
    SwitchPolicy policy = SwitchPolicy::none();
    if (!cfg.raw.contains("policy")) return policy;
    const Json& p = cfg.raw["policy"];
    const std::string kind = p.value("kind", "none");
    if (kind == "none") return policy;
    if (kind == "threshold") {
        policy.kind = SwitchPolicy::Kind::Threshold;
        policy.psi = spec.psi;
        policy.a1 = spec.a1;
        policy.a0 = spec.a0;
        if (p.contains("times"))
            for (const auto& t : p["times"]) policy.times.push_back(t.get<double>());
        return policy;
    }
    throw InvalidArgument("unknown policy kind: " + kind);
}

SimulationSpec simulation_from_config(const RunConfig& cfg) {
    const TradingExampleSpec& spec = need_trading(cfg);
    SimulationSpec sim;
    sim.coeffs = trading_coefficients(spec);
    sim.rates = trading_rates(spec);
    sim.costs = trading_costs(spec);
    sim.policy = policy_from_config(cfg, spec);
    sim.m0 = cfg.m0;
    sim.l0 = cfg.l0.size() > 0 ? cfg.l0 : ChainLaw::uniform(spec.states);
    sim.particles = cfg.particles;
    sim.dt = cfg.dt;
    sim.horizon = spec.horizon;
    sim.seed = cfg.seed;
    sim.threads = cfg.threads;
    return sim;
}

class SnapshotDumper : public FlowObserver {
public:
    SnapshotDumper(CsvWriter&& w, int stride) : w_(std::move(w)), stride_(stride) {}

    void step(double t, double, const std::vector<Vec>& x, const std::vector<int>& mode,
              const std::vector<int>& alpha, const DiscreteLawS&, const ChainLaw&,
              const std::vector<Vec>&, const std::vector<Vec>&) override {
        if (k_ == 0) {
            std::vector<std::string> cols = {"t", "particle"};
            for (int c = 0; c < (x.empty() ? 1 : x.front().size()); ++c)
                cols.push_back("x_" + std::to_string(c + 1));
            cols.push_back("mode");
            cols.push_back("chain");
            w_.header(cols);
        }
        if (k_++ % stride_ != 0) return;
        for (std::size_t n = 0; n < x.size(); ++n) {
            w_.field(t).field(static_cast<long>(n));
            for (int c = 0; c < x[n].size(); ++c) w_.field(x[n][c]);
            w_.field(mode[n]).field(alpha[n]);
            w_.endrow();
        }
    }

    void measure_jump(double, const DiscreteLawS&, const DiscreteLawS&,
                      const ChainLaw&) override {}

private:
    CsvWriter w_;
    int stride_;
    long k_ = 0;
};

int cmd_validate(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    std::vector<std::pair<std::string, ValidationReport>> checks;
    checks.emplace_back("trading_spec", spec.validate());
    checks.emplace_back("generator", validate_generator(spec.generator()));
    checks.emplace_back(
        "costs", validate_costs(trading_costs(spec), default_time_grid(spec.horizon),
                                default_x_grid(run.cfg.domain_lo, run.cfg.domain_hi)));
    checks.emplace_back("drift_premise",
                        check_drift_premise(spec, trading_coefficients(spec),
                                            run.cfg.domain_lo, run.cfg.domain_hi));
    if (run.cfg.m0.n_modes > 0 && !run.cfg.m0.atoms.empty())
        checks.emplace_back("initial_law", validate_law(run.cfg.m0));

    CsvWriter w = run.writer("validate.csv");
    w.header({"check", "ok", "message"});
    bool all_ok = true;
    for (const auto& [name, rep] : checks) {
        w.field(name).field(rep.ok ? 1 : 0).field(rep.message);
        w.endrow();
        if (!rep.ok) {
            std::cerr << "FAIL " << name << ": " << rep.message << "\n";
            all_ok = false;
        } else {
            std::cout << "ok " << name << "\n";
        }
    }
    return all_ok ? 0 : 1;
}

int cmd_simulate(CliRun& run) {
    SimulationSpec sim = simulation_from_config(run.cfg);
    const int steps = static_cast<int>(std::llround((sim.horizon - sim.t0) / sim.dt));
    const int stride = std::max(1, steps / 50);
    SnapshotDumper dumper(run.writer("snapshots.csv"), stride);
    EnsembleFlow flow = simulate(sim, &dumper);

    {
        CsvWriter w = run.writer("events.csv");
        w.header({"t", "particle", "from_mode", "to_mode", "x", "cost"});
        for (const auto& e : flow.events) {
            w.field(e.time).field(e.particle).field(e.from_mode).field(e.to_mode)
                .field(e.x[0]).field(e.cost);
            w.endrow();
        }
    }
    {
        GainEstimate g = gain(flow);
        MartingaleReport mr = martingale_residual(flow);
        CsvWriter w = run.writer("summary.csv");
        w.header({"gain", "running_integral", "terminal", "switch_cost", "std_error",
                  "martingale_max_z"});
        w.field(g.value).field(g.running_integral).field(g.terminal).field(g.switch_cost)
            .field(g.std_error).field(mr.max_z);
        w.endrow();
    }
    {
        // Terminal empirical law in the measure schema.
        CsvWriter w = run.writer("final_law.csv");
        std::vector<std::string> cols;
        for (int c = 0; c < flow.m_final.dim(); ++c)
            cols.push_back("x_" + std::to_string(c + 1));
        cols.push_back("mode");
        cols.push_back("weight");
        w.header(cols);
        for (const auto& atom : flow.m_final.compacted().atoms) {
            for (int c = 0; c < atom.x.size(); ++c) w.field(atom.x[c]);
            w.field(atom.mode).field(atom.weight);
            w.endrow();
        }
    }
    std::cout << "simulated " << sim.particles << " particles over " << steps
              << " steps\n";
    return 0;
}

int cmd_residual(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    const CylindricalFunctional u = trading_functional(spec);
    const CoefficientSet coeffs = trading_coefficients(spec);
    const RateFunction rf = trading_rates(spec);
    const CostMatrix g = trading_costs(spec);

    const int G = run.cfg.residual_grid;
    const double t = 0.5 * spec.horizon;
    double vmax = 0.0;
    for (int q = 0; q < spec.states; ++q)
        vmax = std::max({vmax, spec.a1[q], spec.a0[q]});
    vmax *= 1.5;

    CsvWriter w = run.writer("residual_sweep.csv");
    w.header({"t", "v1", "v0", "l0", "diffusion_residual", "obstacle_gap", "min",
              "kink_flag"});
    for (int i = 1; i <= G; ++i) {
        for (int j = 1; j <= G; ++j) {
            const double v1 = vmax * i / G;
            const double v0 = vmax * j / G;
            for (int kl = 0; kl <= 4; ++kl) {
                const double l0 = kl / 4.0;
                Vec lw = Vec::Zero(spec.states);
                lw[0] = l0;
                lw[spec.states - 1] = 1.0 - l0;
                const ChainLaw l(lw);
                DiscreteLawS m;
                m.n_modes = 2;
                m.atoms.push_back({Vec::Constant(1, 2.0 * v1), 1, 0.5});
                m.atoms.push_back({Vec::Constant(1, 2.0 * v0), 0, 0.5});
                const ViResidual r = vi_residual(u, t, m, l, coeffs, rf, g);
                w.field(t).field(v1).field(v0).field(l0).field(r.diffusion)
                    .field(r.obstacle_gap).field(r.min).field(r.kink ? 1 : 0);
                w.endrow();
            }
        }
    }
    return 0;
}

int cmd_regions(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    const int G = run.cfg.region_grid;
    double vmax = 0.0;
    for (int q = 0; q < spec.states; ++q)
        vmax = std::max({vmax, spec.a1[q], spec.a0[q]});
    vmax *= 1.5;
    std::vector<double> grid;
    for (int i = 1; i <= G; ++i) grid.push_back(vmax * i / G);
    const StrategyTable table = strategy_table(spec, grid, grid);

    CsvWriter w = run.writer("regions.csv");
    w.header({"v1", "v0", "q", "long_action", "short_action"});
    for (const auto& c : table.cells) {
        w.field(c.v1).field(c.v0).field(c.chain_state)
            .field(to_string(c.long_action)).field(to_string(c.short_action));
        w.endrow();
    }
    CsvWriter b = run.writer("region_boundaries.csv");
    b.header({"kind", "q", "threshold"});
    for (int q = 0; q < spec.states; ++q) {
        b.field("long").field(q).field(table.long_boundaries[q]);
        b.endrow();
        b.field("short").field(q).field(table.short_boundaries[q]);
        b.endrow();
    }
    return 0;
}

int cmd_reduce(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    require(spec.states == 4, "reduce needs the four-state layout");
    const GeneratorMatrix qbar = averaged_generator(spec.two_scale());

    CsvWriter w = run.writer("averaged_generator.csv");
    w.header({"row", "col", "rate"});
    for (int r = 0; r < qbar.size(); ++r)
        for (int c = 0; c < qbar.size(); ++c) {
            w.field(r).field(c).field(qbar(r, c));
            w.endrow();
        }

    // The limit spec exists only for block-constant thresholds.
    try {
        const TradingExampleSpec limit = limit_reduction(spec);
        CsvWriter s = run.writer("limit_spec.csv");
        s.header({"state", "a1", "a0", "mu1", "mu2"});
        for (int q = 0; q < 2; ++q) {
            s.field(q).field(limit.a1[q]).field(limit.a0[q]).field(limit.mu1)
                .field(limit.mu2);
            s.endrow();
        }
    } catch (const InvalidArgument& e) {
        std::cout << "limit spec skipped: " << e.what() << "\n";
    }
    return 0;
}

int cmd_ito_check(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    SimulationSpec sim = simulation_from_config(run.cfg);
    sim.policy = SwitchPolicy::none();
    EnsembleFlow flow = simulate(sim);

    std::vector<std::pair<std::string, CylindricalFunctional>> tests;
    tests.emplace_back("linear",
                       CylindricalFunctional::linear_moment(1, spec.psi, spec.horizon));
    tests.emplace_back("linear_to_horizon",
                       CylindricalFunctional::linear_moment(
                           0, spec.psi, spec.horizon, 1.0,
                           CylindricalFunctional::TimeWeight::ToHorizon));
    tests.emplace_back("quadratic", CylindricalFunctional::linear_moment(
                                        1, ScalarFn::quadratic(0.0, Vec::Zero(1),
                                                               Vec::Ones(1)),
                                        spec.horizon));

    CsvWriter w = run.writer("ito_report.csv");
    w.header({"functional", "lhs", "time_and_jump", "drift_diffusion", "measure_jump",
              "path_jump", "rhs", "residual", "budget", "ok"});
    bool all_ok = true;
    for (const auto& [name, u] : tests) {
        const ItoReport rep = ito_check(u, flow, sim.coeffs, sim.rates);
        w.field(name).field(rep.lhs).field(rep.time_and_jump_term)
            .field(rep.drift_diffusion_term).field(rep.measure_jump_term)
            .field(rep.path_jump_term).field(rep.rhs).field(rep.residual)
            .field(rep.error_budget).field(rep.ok ? 1 : 0);
        w.endrow();
        std::cout << name << ": residual " << rep.residual << " budget "
                  << rep.error_budget << (rep.ok ? " ok" : " FAIL") << "\n";
        all_ok = all_ok && rep.ok;
    }
    return all_ok ? 0 : 1;
}

DiscreteInstance random_instance(Rng& rng) {
    DiscreteInstance inst;
    const int G = 2 + static_cast<int>(rng.uniform() * 2);
    for (int g = 0; g < G; ++g) inst.x_grid.push_back(Vec::Constant(1, g + rng.uniform()));
    inst.n_modes = 2;
    inst.n_states = 2;
    inst.steps = 2 + static_cast<int>(rng.uniform() * 3);
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
        inst.x_step.push_back(random_stochastic(G));
    inst.chain_step = random_stochastic(inst.n_states);

    // Identity plus per-cell half and full flips; rows are cell-ordered.
    DiscreteInstance::Action ident;
    for (int c = 0; c < inst.cells(); ++c) {
        Vec row = Vec::Zero(inst.n_modes);
        row[c % inst.n_modes] = 1.0;
        ident.rows.push_back(row);
    }
    inst.actions.push_back(ident);
    for (double frac : {0.5, 1.0}) {
        for (int target_cell = 0; target_cell < inst.cells(); ++target_cell) {
            DiscreteInstance::Action a = ident;
            const int mode = target_cell % inst.n_modes;
            Vec row = Vec::Zero(inst.n_modes);
            row[mode] = 1.0 - frac;
            row[1 - mode] = frac;
            a.rows[target_cell] = row;
            inst.actions.push_back(a);
        }
    }

    inst.costs = CostMatrix::constant(inst.n_modes, 0.05 + 0.2 * rng.uniform());
    inst.f_table.resize(inst.steps * inst.n_states * inst.cells());
    for (auto& v : inst.f_table) v = rng.uniform();
    inst.h_table.resize(inst.n_states * inst.cells());
    for (auto& v : inst.h_table) v = rng.uniform();
    return inst;
}

int cmd_dpp_check(CliRun& run) {
    Rng rng(run.cfg.seed + 17);
    const int n_instances = 8;
    CsvWriter w = run.writer("dpp_report.csv");
    w.header({"instance", "value", "consistency_gap", "terminal_matches_H"});
    bool ok = true;
    for (int k = 0; k < n_instances; ++k) {
        DiscreteInstance inst = random_instance(rng);
        InstanceLaw law;
        law.weights = Vec::Zero(inst.cells() * inst.n_states);
        for (int c = 0; c < law.weights.size(); ++c) law.weights[c] = rng.uniform();
        law.weights /= law.weights.sum();

        const DppSolution sol = dpp_enumeration_solver(inst, 0, law);
        const int s = inst.steps / 2;
        const double gap = dpp_consistency(inst, 0, s, law);
        const double vT = dpp_enumeration_solver(inst, inst.steps, law).value;
        const DiscreteLawS mm = law.marginal_m(inst);
        const ChainLaw ll = law.marginal_l(inst);
        double H = 0.0;
        for (int q = 0; q < inst.n_states; ++q) {
            double inner = 0.0;
            for (const auto& atom : mm.atoms) {
                int xi = 0;
                for (int gidx = 0; gidx < static_cast<int>(inst.x_grid.size()); ++gidx)
                    if ((inst.x_grid[gidx] - atom.x).norm() < 1e-12) xi = gidx;
                inner += atom.weight * inst.h(q, inst.cell(xi, atom.mode));
            }
            H += ll(q) * inner;
        }
        const bool term_ok = std::abs(vT - H) <= 1e-12;
        w.field(k).field(sol.value).field(gap).field(term_ok ? 1 : 0);
        w.endrow();
        ok = ok && gap <= 1e-12 && term_ok;
    }
    std::cout << (ok ? "dpp checks passed\n" : "dpp checks FAILED\n");
    return ok ? 0 : 1;
}

int cmd_converge(CliRun& run) {
    const TradingExampleSpec& spec = need_trading(run.cfg);
    require(spec.states == 4, "converge needs the four-state layout");

    std::vector<ConvergenceProbe> probes;
    Rng rng(run.cfg.seed + 5);
    for (int k = 0; k < 20; ++k) {
        ConvergenceProbe p;
        p.t = 0.9 * spec.horizon * rng.uniform();
        p.m.n_modes = 2;
        p.m.atoms.push_back({Vec::Constant(1, 1.0 + 5.0 * rng.uniform()), 1, 0.5});
        p.m.atoms.push_back({Vec::Constant(1, 1.0 + 5.0 * rng.uniform()), 0, 0.5});
        Vec lw(4);
        for (int q = 0; q < 4; ++q) lw[q] = 0.05 + rng.uniform();
        lw /= lw.sum();
        p.l = ChainLaw(lw);
        probes.push_back(std::move(p));
    }
    const ConvergenceTable table =
        two_scale_convergence(spec, {1.0, 0.1, 0.01}, probes, 100000, 10, run.cfg.seed);

    CsvWriter w = run.writer("converge.csv");
    w.header({"epsilon", "occupancy_ratio_error", "occupancy_se", "value_gap"});
    for (const auto& row : table.rows) {
        w.field(row.epsilon).field(row.occupancy_ratio_error).field(row.occupancy_se)
            .field(row.value_gap);
        w.endrow();
        std::cout << "eps=" << row.epsilon << " ratio_err=" << row.occupancy_ratio_error
                  << " value_gap=" << row.value_gap << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field optimal switching toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int threads = 0;

    app.add_option("--config", config_path, "config file (JSON)")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "worker threads");

    const std::vector<std::string> commands = {"validate", "simulate", "residual",
                                               "regions",  "reduce",   "ito-check",
                                               "dpp-check", "converge"};
    for (const auto& c : commands) app.add_subcommand(c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CliRun run;
        run.cfg = load_config(config_path);
        if (seed_set) run.cfg.seed = seed_override;
        if (threads > 0) run.cfg.threads = threads;
        run.out = out_dir;
        fs::create_directories(run.out);
        run.command = app.get_subcommands().front()->get_name();

        int rc = 2;
        if (run.command == "validate") rc = cmd_validate(run);
        else if (run.command == "simulate") rc = cmd_simulate(run);
        else if (run.command == "residual") rc = cmd_residual(run);
        else if (run.command == "regions") rc = cmd_regions(run);
        else if (run.command == "reduce") rc = cmd_reduce(run);
        else if (run.command == "ito-check") rc = cmd_ito_check(run);
        else if (run.command == "dpp-check") rc = cmd_dpp_check(run);
        else if (run.command == "converge") rc = cmd_converge(run);
        run.manifest();
        return rc;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
