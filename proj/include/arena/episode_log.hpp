#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "arena/agent.hpp"
#include "arena/config.hpp"
#include "arena/eval.hpp"
#include "arena/traffic.hpp"

namespace arena {

inline constexpr std::string_view kLogFormat = "arena-episode/1";

struct LoggedVehicle {
  std::string id;
  Pose2 pose;
  double speed = 0.0;
  double accel = 0.0;
  std::string lane;
  double length = 0.0;
  double width = 0.0;
  bool operator==(const LoggedVehicle&) const = default;
};

/// One 10 Hz physics frame.
struct FrameRecord {
  std::int64_t tick = 0;
  double time = 0.0;
  std::vector<LoggedVehicle> vehicles;  // ego first, then by id
  std::vector<CollisionEvent> collisions;
  bool operator==(const FrameRecord&) const = default;
};

/// One 2 Hz control tick: what was rendered, what the agent saw and
/// planned, and how the plan scored.
struct ControlRecord {
  std::int64_t frame_id = 0;
  std::int64_t tick = 0;  // the physics frame this tick observed
  double time = 0.0;
  std::string payload_hash;
  std::optional<std::int64_t> reference_frame_id;
  std::string reference_hash;  // hash of the reference images sent
  std::vector<std::string> image_hashes;
  std::string response_hash;  // hash of the returned image set
  std::string renderer_tag;
  double dream_latency_ms = 0.0;
  EgoStatus ego_status;
  Vec2 command;
  AgentPlan plan;
  bool agent_degraded = false;
  double agent_latency_ms = 0.0;
  double route_s = 0.0;
  std::vector<Pose2> reference_plan;  // engine planner, 31 samples
  FrameScore score;
  bool operator==(const ControlRecord&) const = default;
};

/// Digest of an image set: SHA-256 over the comma-joined image hashes.
/// Empty sets hash to the empty string.
std::string image_set_hash(const std::vector<std::string>& image_hashes);

struct EpisodeLog {
  std::string episode_id;
  SimulationConfig config;
  std::string config_hash;
  std::string version;
  std::vector<FrameRecord> frames;
  std::vector<ControlRecord> controls;
  std::optional<Termination> termination;
  double route_completion = 0.0;  // from the termination record
};

/// Streams NDJSON records. Every record carries a sequence number, the
/// hash of the previous record and its own hash over the canonical body.
class EpisodeLogWriter {
 public:
  /// `sink` may be null; the text is always kept in memory too.
  explicit EpisodeLogWriter(std::ostream* sink = nullptr) : sink_(sink) {}

  void header(const std::string& episode_id, const SimulationConfig& config);
  void frame(const FrameRecord& record);
  void control(const ControlRecord& record);
  /// Writes the termination record followed by the closing index.
  void termination(const Termination& t, double route_completion);

  const std::string& text() const { return text_; }
  std::size_t records() const { return seq_; }
  bool closed() const { return closed_; }

 private:
  void append(std::string_view type, std::string body_json);
  std::ostream* sink_;
  std::string text_;
  std::string prev_hash_;
  std::size_t seq_ = 0;
  std::size_t frames_ = 0;
  std::size_t controls_ = 0;
  bool closed_ = false;
};

FrameRecord frame_record(const WorldState& world);

/// Parses and verifies a log: per-record hashes, the hash chain, sequence
/// numbers, monotone timestamps, control-to-frame references, the
/// autoregressive reference chain and a single termination. Throws
/// IntegrityError naming the first bad record (1-based line number).
EpisodeLog parse_episode_log(std::string_view text);
EpisodeLog read_episode_log(const std::string& path);

/// Plans keyed by control frame id, for the replay agent.
std::map<std::int64_t, AgentPlan> recorded_plans(const EpisodeLog& log);

/// Recomputes every FrameScore from the logged inputs with `eval`.
EvalReport rescore(const EpisodeLog& log, const EvalConfig& eval,
                   const RoadGraph& graph, const Route& route);

}  // namespace arena
