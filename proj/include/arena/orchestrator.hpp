#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include "arena/config.hpp"
#include "arena/episode_log.hpp"
#include "arena/eval.hpp"
#include "arena/roadnet.hpp"

namespace arena {

/// Consecutive off-road physics frames that end an episode.
inline constexpr int kOffRoadFrames = 5;
/// Route progress within this distance of the end counts as complete.
inline constexpr double kCompletionTolerance = 1e-6;
/// Distance ahead on the route used for the agent's command point.
inline constexpr double kCommandLookahead = 30.0;

/// Map and route resolved from a config.
struct Scenario {
  RoadGraph graph;
  Route route;
  std::string route_name;
};
Scenario load_scenario(const SimulationConfig& config);

struct RunOptions {
  std::string episode_id;             // derived from the config when empty
  std::ostream* log_sink = nullptr;   // receives records as they are written
  /// Replay sources. With a log, the agent binding may be `replay` and the
  /// renderer re-renders and checks every image hash against it.
  const EpisodeLog* replay_source = nullptr;
  bool replay_renderer = false;
  const std::atomic<bool>* cancel = nullptr;
  /// Called after every control tick with the sim time (progress reports).
  std::function<void(double)> on_control;
};

struct EpisodeResult {
  std::string episode_id;
  std::string log_text;
  EpisodeLog log;
  EvalReport report;
  std::vector<Vec2> realized_path;  // ego positions at 10 Hz
};

/// Runs one episode to termination. Binding failures end the episode with
/// RENDERER_FAILURE or AGENT_TIMEOUT and still produce a complete log.
EpisodeResult run_episode(const SimulationConfig& config,
                          const RunOptions& options = {});
/// Same loop with the engine driving the ego; requires mode open_loop.
EpisodeResult run_open_loop(const SimulationConfig& config,
                            const RunOptions& options = {});

/// Deterministic id from the config hash.
std::string default_episode_id(const SimulationConfig& config);

/// Re-runs a logged episode with the replay agent and replay renderer.
EpisodeResult replay_episode(const EpisodeLog& log);

}  // namespace arena
