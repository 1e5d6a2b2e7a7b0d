#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "arena/codec.hpp"
#include "arena/dreamer.hpp"
#include "arena/roadnet.hpp"
#include "arena/traffic.hpp"

namespace arena {

struct EgoStatus {
  double speed = 0.0;     // m/s
  double accel = 0.0;     // m/s^2
  double yaw_rate = 0.0;  // rad/s
  bool operator==(const EgoStatus&) const = default;
};

struct AgentObservation {
  std::int64_t frame_id = 0;
  std::vector<EncodedImage> images;  // one per camera, from the dreamer
  EgoStatus ego_status;
  Vec2 command;  // next route goal point in the ego frame
  double timestamp = 0.0;

  /// Throws ValidationError for an empty image set or non-finite numbers.
  void validate() const;
  bool operator==(const AgentObservation&) const = default;
};

/// `hard_left` is an adversarial agent that steers off the road; it exists
/// to exercise the off-road termination path.
enum class AgentKind : std::uint8_t {
  kRuleBased,
  kReplay,
  kConstantVelocity,
  kHardLeft,
  kRemote,
};
std::string_view to_string(AgentKind kind);
AgentKind agent_kind_from_string(std::string_view name);

struct AgentBinding {
  AgentKind kind = AgentKind::kRuleBased;
  std::string endpoint;  // remote only
  int timeout_ms = kDefaultTimeoutMs;
  std::string replay_log;  // replay only: episode log to read plans from

  void validate() const;
  bool operator==(const AgentBinding&) const = default;
};

/// Privileged inputs for the rule-based agent and recorded plans for the
/// replay agent. Other kinds ignore it.
struct AgentContext {
  const WorldState* world = nullptr;
  const RoadGraph* graph = nullptr;
  const Route* route = nullptr;
  IdmParams idm;
  const std::map<std::int64_t, AgentPlan>* recorded_plans = nullptr;
};

struct AgentResult {
  AgentPlan plan;
  bool degraded = false;  // rule-based recovery mode
  double latency_ms = 0.0;
};

/// One plan request. The returned plan always has six finite waypoints.
/// Remote bindings POST /plan once. Throws TransportError, ProtocolError or
/// ContractError (including a wrong waypoint count).
AgentResult request_plan(const AgentBinding& binding,
                         const AgentObservation& obs,
                         const AgentContext& context = {});

std::string serialize(const AgentObservation& obs);
std::string serialize(const AgentPlan& plan);
AgentObservation parse_agent_observation(std::string_view body);
/// Malformed JSON throws ProtocolError; a waypoint list that is not exactly
/// six long throws ContractError.
AgentPlan parse_agent_plan(std::string_view body);

/// Straight ahead at the current speed.
AgentPlan constant_velocity_plan(const AgentObservation& obs);
/// Tight left arc (radius about 6.7 m) at no less than 8 m/s.
AgentPlan hard_left_plan(const AgentObservation& obs);

struct RuleBasedOutput {
  AgentPlan plan;
  bool degraded = false;
};

/// Pure pursuit on the route reference path with IDM speed control against
/// the nearest leader on the ego's lane chain. Farther than
/// kRecoveryDistance from the route the agent heads for the nearest route
/// point instead and flags the plan degraded.
inline constexpr double kRecoveryDistance = 10.0;
RuleBasedOutput rule_based_plan(const WorldState& world, const RoadGraph& graph,
                                const Route& route, const IdmParams& idm = {});

/// Server-side handler for POST /plan with a builtin image-only agent.
std::string handle_plan_body(std::string_view body, AgentKind kind);

}  // namespace arena
