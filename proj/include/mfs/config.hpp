#ifndef MFS_CONFIG_HPP
#define MFS_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "mfs/chain.hpp"
#include "mfs/flow.hpp"
#include "mfs/model.hpp"
#include "mfs/trading.hpp"

namespace mfs {

using Json = nlohmann::json;

/// Parsed run configuration. Sections are optional; each command pulls what
/// it needs and validates on access.
struct RunConfig {
    Json raw;
    std::string source_text;

    std::optional<TradingExampleSpec> trading;
    std::optional<GeneratorMatrix> generator;
    std::optional<TwoScaleSpec> two_scale;

    DiscreteLawS m0;
    ChainLaw l0;

    int particles = 1000;
    double dt = 1e-2;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    int threads = 1;

    // Command-specific knobs with documented defaults.
    int residual_grid = 10;
    int region_grid = 50;
    double domain_lo = 0.1;
    double domain_hi = 10.0;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

ScalarFn parse_scalar_fn(const Json& j);
GeneratorMatrix parse_generator(const Json& j);
TwoScaleSpec parse_two_scale(const Json& j);
TradingExampleSpec parse_trading(const Json& j);
DiscreteLawS parse_law(const Json& j);
ChainLaw parse_chain_law(const Json& j);

/// FNV-1a over the raw config text; recorded in the run manifest.
std::string config_hash(const std::string& text);

} // namespace mfs

#endif
