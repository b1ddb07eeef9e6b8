#include "mfs/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mfs {

namespace {

Vec parse_vec(const Json& j) {
    require(j.is_array(), "expected an array of numbers");
    Vec v(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
    return v;
}

} // namespace

ScalarFn parse_scalar_fn(const Json& j) {
    if (j.is_number()) return ScalarFn::constant(j.get<double>());
    require(j.is_object() && j.contains("kind"), "scalar function needs a kind");
    const std::string kind = j["kind"].get<std::string>();
    const double c0 = j.value("c0", 0.0);
    if (kind == "constant") return ScalarFn::constant(c0);
    if (kind == "coordinate") return ScalarFn::coordinate(j.value("dim", 1), j.value("axis", 0));
    Vec lin = j.contains("lin") ? parse_vec(j["lin"]) : Vec::Zero(1);
    if (kind == "affine") return ScalarFn::affine(c0, std::move(lin));
    if (kind == "affine_clipped") return ScalarFn::affine_clipped(c0, std::move(lin));
    if (kind == "quadratic") {
        Vec quad = j.contains("quad") ? parse_vec(j["quad"]) : Vec::Zero(1);
        return ScalarFn::quadratic(c0, std::move(lin), std::move(quad));
    }
    throw InvalidArgument("unknown scalar function kind: " + kind);
}

GeneratorMatrix parse_generator(const Json& j) {
    require(j.is_array() && !j.empty(), "generator must be a matrix");
    const int n = static_cast<int>(j.size());
    Mat m(n, n);
    for (int r = 0; r < n; ++r) {
        require(static_cast<int>(j[r].size()) == n, "generator must be square");
        for (int c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
    }
    GeneratorMatrix g(std::move(m));
    auto rep = validate_generator(g);
    require(rep.ok, "generator: " + rep.message);
    return g;
}

TwoScaleSpec parse_two_scale(const Json& j) {
    TwoScaleSpec spec;
    for (const auto& b : j.at("blocks")) spec.blocks.push_back(b.get<int>());
    for (const auto& f : j.at("fast")) spec.fast.push_back(parse_generator(f));
    spec.slow = parse_generator(j.at("slow"));
    spec.epsilon = j.value("epsilon", 1.0);
    auto rep = validate_two_scale(spec);
    require(rep.ok, "two_scale: " + rep.message);
    return spec;
}

TradingExampleSpec parse_trading(const Json& j) {
    TradingExampleSpec spec;
    spec.horizon = j.value("horizon", 1.0);
    if (j.contains("psi")) spec.psi = parse_scalar_fn(j["psi"]);
    spec.states = j.value("states", 2);
    for (const auto& a : j.at("a1")) spec.a1.push_back(a.get<double>());
    for (const auto& a : j.at("a0")) spec.a0.push_back(a.get<double>());
    spec.mu1 = j.value("mu1", 1.0);
    spec.mu2 = j.value("mu2", 1.0);
    spec.lam1 = j.value("lam1", 1.0);
    spec.lam2 = j.value("lam2", 1.0);
    spec.epsilon = j.value("epsilon", 1.0);
    spec.sigma = j.value("sigma", 0.0);
    auto rep = spec.validate();
    require(rep.ok, "trading: " + rep.message);
    return spec;
}

DiscreteLawS parse_law(const Json& j) {
    DiscreteLawS m;
    m.n_modes = j.value("n_modes", 2);
    for (const auto& atom : j.at("atoms")) {
        DiscreteLawS::Atom a;
        a.x = parse_vec(atom.at("x"));
        a.mode = atom.at("mode").get<int>();
        a.weight = atom.at("weight").get<double>();
        m.atoms.push_back(std::move(a));
    }
    auto rep = validate_law(m);
    require(rep.ok, "initial law: " + rep.message);
    return m;
}

ChainLaw parse_chain_law(const Json& j) {
    ChainLaw l(parse_vec(j));
    double s = 0.0;
    for (int k = 0; k < l.size(); ++k) {
        require(l(k) >= 0.0, "chain law: negative weight");
        s += l(k);
    }
    require(std::abs(s - 1.0) <= 1e-12, "chain law: weights must sum to 1");
    return l;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    cfg.source_text = text;
    cfg.raw = Json::parse(text);
    const Json& j = cfg.raw;

    if (j.contains("model") && j["model"].contains("trading"))
        cfg.trading = parse_trading(j["model"]["trading"]);
    if (j.contains("chain")) {
        if (j["chain"].contains("generator"))
            cfg.generator = parse_generator(j["chain"]["generator"]);
        if (j["chain"].contains("two_scale"))
            cfg.two_scale = parse_two_scale(j["chain"]["two_scale"]);
    }
    if (j.contains("initial")) {
        if (j["initial"].contains("m0")) cfg.m0 = parse_law(j["initial"]["m0"]);
        if (j["initial"].contains("l0")) cfg.l0 = parse_chain_law(j["initial"]["l0"]);
    }
    if (j.contains("numerics")) {
        const Json& n = j["numerics"];
        cfg.particles = n.value("particles", cfg.particles);
        cfg.dt = n.value("dt", cfg.dt);
        cfg.horizon = n.value("horizon", cfg.horizon);
        cfg.seed = n.value("seed", cfg.seed);
        cfg.threads = n.value("threads", cfg.threads);
        cfg.residual_grid = n.value("residual_grid", cfg.residual_grid);
        cfg.region_grid = n.value("region_grid", cfg.region_grid);
        cfg.domain_lo = n.value("domain_lo", cfg.domain_lo);
        cfg.domain_hi = n.value("domain_hi", cfg.domain_hi);
        require(cfg.particles > 0 && cfg.dt > 0.0 && cfg.horizon > 0.0,
                "numerics entries must be positive");
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

std::string config_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace mfs
