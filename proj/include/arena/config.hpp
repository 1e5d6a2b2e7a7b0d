#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arena/agent.hpp"
#include "arena/dreamer.hpp"
#include "arena/eval.hpp"
#include "arena/layout.hpp"
#include "arena/traffic.hpp"

namespace arena {

/// A named route from the map file, or explicit start and goal points.
struct RouteSelection {
  std::string name;
  std::optional<Vec2> start;
  std::optional<Vec2> goal;
  bool operator==(const RouteSelection&) const = default;
};

struct SimulationConfig {
  std::string map = "fixture:singapore-onenorth";
  RouteSelection route{"sing_route_1", std::nullopt, std::nullopt};
  TrafficConfig traffic;  // its seed is overwritten by `seed`
  RigOptions rig;
  RendererBinding dreamer;
  AgentBinding agent;
  EgoMode mode = EgoMode::kClosedLoop;
  double time_limit = 120.0;  // simulated seconds
  EvalConfig eval;
  std::string prompt = "a clear day on city streets";
  std::uint64_t seed = 0;
  double layout_radius = 50.0;
  BevConfig bev;
  int embedding_bands = kDefaultBands;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
  bool operator==(const SimulationConfig&) const = default;
};

/// Canonical JSON with every field present (what `arena init` writes).
std::string config_to_json(const SimulationConfig& config, int indent = 2);
/// Missing keys take defaults; unknown keys and wrong types are rejected
/// with a ValidationError whose field is the dotted key path.
SimulationConfig parse_config(std::string_view text);
SimulationConfig load_config(const std::string& path);
/// SHA-256 of the compact canonical JSON.
std::string config_hash(const SimulationConfig& config);

/// "http://..." selects a remote binding, anything else a builtin token.
RendererBinding parse_dreamer_flag(const std::string& value);
AgentBinding parse_agent_flag(const std::string& value);

struct SuiteEntry {
  std::string route;
  SimulationConfig config;
};

struct SuiteSpec {
  std::vector<SuiteEntry> entries;
  std::string report_path;
};

/// Suite document: {"base": config, "routes": [{"name", "overrides"}],
/// "report": path}. Overrides are merge patches over the base config.
/// Route names must be unique.
SuiteSpec parse_suite(std::string_view text);
/// The four fixture routes of the default evaluation suite.
SuiteSpec default_suite(const SimulationConfig& base);

}  // namespace arena
