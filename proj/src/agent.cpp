#include "arena/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "arena/errors.hpp"
#include "arena/service.hpp"
#include "json_util.hpp"

namespace arena {

using detail::json;

namespace {

constexpr double kKnotSpacing = 0.5;
constexpr int kKnots = 6;
constexpr double kHardLeftCurvature = 0.15;
constexpr double kHardLeftSpeed = 8.0;
constexpr double kMaxBrake = 8.0;
constexpr double kComfortAccel = 2.0;
constexpr double kZoneDecel = 2.0;  // braking toward slower lanes ahead
constexpr double kZoneLookahead = 120.0;
constexpr double kRecoverySpeed = 4.0;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void AgentObservation::validate() const {
  if (images.empty()) throw ValidationError("observation.images", "empty image set");
  if (!finite(ego_status.speed) || !finite(ego_status.accel) ||
      !finite(ego_status.yaw_rate)) {
    throw ValidationError("observation.ego_status", "non-finite value");
  }
  if (!finite(command.x) || !finite(command.y)) {
    throw ValidationError("observation.command", "non-finite value");
  }
  if (!finite(timestamp)) {
    throw ValidationError("observation.timestamp", "non-finite value");
  }
}

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kRuleBased: return "rule_based";
    case AgentKind::kReplay: return "replay";
    case AgentKind::kConstantVelocity: return "constant_velocity";
    case AgentKind::kHardLeft: return "hard_left";
    case AgentKind::kRemote: return "remote";
  }
  return "rule_based";
}

AgentKind agent_kind_from_string(std::string_view name) {
  for (auto k : {AgentKind::kRuleBased, AgentKind::kReplay,
                 AgentKind::kConstantVelocity, AgentKind::kHardLeft,
                 AgentKind::kRemote}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("agent.kind",
                        "expected rule_based, replay, constant_velocity, "
                        "hard_left or remote, got '" + std::string(name) + "'");
}

void AgentBinding::validate() const {
  if (kind == AgentKind::kRemote && endpoint.empty()) {
    throw ValidationError("agent.endpoint", "required for a remote binding");
  }
  if (kind != AgentKind::kRemote && !endpoint.empty()) {
    throw ValidationError("agent.endpoint", "only valid for a remote binding");
  }
  if (kind == AgentKind::kReplay && replay_log.empty()) {
    throw ValidationError("agent.replay_log", "required for a replay binding");
  }
  if (timeout_ms <= 0) throw ValidationError("agent.timeout_ms", "must be positive");
}

// ---------------------------------------------------------------------------
// Wire format

std::string serialize(const AgentObservation& obs) {
  json j{{"protocol_version", std::string(kProtocolVersion)},
         {"frame_id", obs.frame_id},
         {"images", detail::images_json(obs.images)},
         {"ego_status",
          {{"speed", obs.ego_status.speed},
           {"accel", obs.ego_status.accel},
           {"yaw_rate", obs.ego_status.yaw_rate}}},
         {"command", json::array({obs.command.x, obs.command.y})},
         {"timestamp", obs.timestamp}};
  return j.dump();
}

std::string serialize(const AgentPlan& plan) {
  json wps = json::array();
  for (const auto& w : plan.waypoints) wps.push_back(detail::pose_json(w));
  json j{{"protocol_version", std::string(kProtocolVersion)},
         {"issued_at", plan.issued_at},
         {"waypoints", std::move(wps)}};
  return j.dump();
}

AgentObservation parse_agent_observation(std::string_view body) {
  return detail::protocol_guard("agent observation", [&] {
    const json j = detail::parse_json(body, "agent observation");
    detail::check_version(j, "agent observation");
    AgentObservation obs;
    obs.frame_id = j.at("frame_id").get<std::int64_t>();
    obs.images = detail::images_from(j.at("images"));
    const auto& st = j.at("ego_status");
    obs.ego_status = {st.at("speed").get<double>(), st.at("accel").get<double>(),
                      st.at("yaw_rate").get<double>()};
    const auto& cmd = j.at("command");
    if (!cmd.is_array() || cmd.size() != 2) {
      throw ProtocolError("agent observation: command must be [x, y]");
    }
    obs.command = {cmd[0].get<double>(), cmd[1].get<double>()};
    obs.timestamp = j.at("timestamp").get<double>();
    return obs;
  });
}

AgentPlan parse_agent_plan(std::string_view body) {
  return detail::protocol_guard("agent plan", [&] {
    const json j = detail::parse_json(body, "agent plan");
    detail::check_version(j, "agent plan");
    const auto& wps = j.at("waypoints");
    if (!wps.is_array()) throw ProtocolError("agent plan: waypoints must be a list");
    if (wps.size() != static_cast<std::size_t>(kKnots)) {
      throw ContractError("agent plan has " + std::to_string(wps.size()) +
                          " waypoints, expected 6");
    }
    AgentPlan plan;
    plan.issued_at = j.at("issued_at").get<double>();
    for (int i = 0; i < kKnots; ++i) plan.waypoints[i] = detail::pose_from(wps[i]);
    return plan;
  });
}

// ---------------------------------------------------------------------------
// Builtin agents

AgentPlan constant_velocity_plan(const AgentObservation& obs) {
  AgentPlan plan;
  plan.issued_at = obs.timestamp;
  for (int i = 0; i < kKnots; ++i) {
    plan.waypoints[i] = {obs.ego_status.speed * kKnotSpacing * (i + 1), 0.0, 0.0};
  }
  return plan;
}

AgentPlan hard_left_plan(const AgentObservation& obs) {
  AgentPlan plan;
  plan.issued_at = obs.timestamp;
  const double v = std::max(obs.ego_status.speed, kHardLeftSpeed);
  const double k = kHardLeftCurvature;
  for (int i = 0; i < kKnots; ++i) {
    const double s = v * kKnotSpacing * (i + 1);
    plan.waypoints[i] = {std::sin(k * s) / k, (1.0 - std::cos(k * s)) / k,
                         wrap_angle(k * s)};
  }
  return plan;
}

namespace {

/// Route point at arclength s, continuing straight past either end.
Vec2 route_point_ext(const Route& route, double s) {
  if (s <= route.total_length) return route.point(std::max(s, 0.0));
  return route.point(route.total_length) +
         heading_vector(route.heading(route.total_length)) *
             (s - route.total_length);
}

/// Lanes ahead of the ego as distance windows with their speed limits.
struct SpeedZone {
  double start = 0.0;
  double end = 0.0;
  double limit = 0.0;
};

std::vector<SpeedZone> chain_zones(const RoadGraph& graph, const VehicleState& ego) {
  std::vector<SpeedZone> zones;
  if (!graph.lanes.contains(ego.lane_id)) return zones;
  std::vector<std::string> chain{ego.lane_id};
  chain.insert(chain.end(), ego.next_lanes.begin(), ego.next_lanes.end());
  double offset = -ego.lane_s;
  for (const auto& id : chain) {
    auto it = graph.lanes.find(id);
    if (it == graph.lanes.end() || offset > kZoneLookahead) break;
    const double len = it->second.length();
    zones.push_back({offset, offset + len, it->second.speed_limit});
    offset += len;
  }
  return zones;
}

/// Fastest speed at distance d that still meets every slower zone ahead.
double zone_cap(const std::vector<SpeedZone>& zones, double d) {
  double cap = std::numeric_limits<double>::infinity();
  for (const auto& z : zones) {
    if (d > z.end) continue;
    const double gap = std::max(0.0, z.start - d);
    cap = std::min(cap, std::sqrt(z.limit * z.limit + 2.0 * kZoneDecel * gap));
  }
  return cap;
}

}  // namespace

RuleBasedOutput rule_based_plan(const WorldState& world, const RoadGraph& graph,
                                const Route& route, const IdmParams& idm) {
  const VehicleState& ego = world.ego();
  RuleBasedOutput out;
  out.plan.issued_at = world.sim_time;

  const Projection start = route.project(ego.pose.position());
  out.degraded = start.distance > kRecoveryDistance;

  std::optional<LeaderInfo> leader;
  if (!out.degraded && ego.lane_id != kOffRoadLane) {
    std::vector<std::string> chain{ego.lane_id};
    chain.insert(chain.end(), ego.next_lanes.begin(), ego.next_lanes.end());
    leader = find_leader(world, graph, ego.id, chain, ego.lane_s, 120.0);
  }

  const double max_kappa = ego.footprint.max_curvature();
  const auto zones = chain_zones(graph, ego);
  Pose2 pose = ego.pose;
  double v = ego.speed;
  double s = start.s;
  double traveled = 0.0;
  const double dt = kStepDt;
  const int steps = kStepsPerControl * kKnots;
  for (int k = 1; k <= steps; ++k) {
    // Lateral: pure pursuit toward a point one lookahead further along.
    const Projection here =
        route.project(pose.position(), s - 2.0, s + 20.0);
    s = out.degraded ? route.project(pose.position()).s : here.s;
    const double lookahead = std::clamp(3.0 + 0.5 * v, 5.0, 15.0);
    const Vec2 target = to_local(pose, route_point_ext(route, s + lookahead));
    const double ld = std::max(target.norm(), 1e-6);
    const double alpha = std::atan2(target.y, target.x);
    const double kappa =
        std::clamp(2.0 * std::sin(alpha) / ld, -max_kappa, max_kappa);

    // Longitudinal: IDM toward a curvature- and limit-capped speed.
    double desired = std::min(idm.desired_speed, zone_cap(zones, traveled));
    if (out.degraded) desired = std::min(desired, kRecoverySpeed);
    double gap = std::numeric_limits<double>::infinity();
    double closing = 0.0;
    if (leader) {
      const double t = (k - 1) * dt;
      gap = leader->gap + leader->speed * t - traveled;
      closing = v - leader->speed;
    }
    const double a = std::clamp(idm_accel(idm, v, desired, std::max(gap, 1e-3), closing),
                                -kMaxBrake, std::min(idm.max_accel, kComfortAccel));
    double v_next = v + a * dt;
    double ds = 0.5 * (v + v_next) * dt;
    if (v_next < 0.0) {
      // Stops within the step.
      ds = a < 0.0 ? v * v / (-2.0 * a) : 0.0;
      v_next = 0.0;
    }
    const double yaw_mid = pose.yaw + 0.5 * kappa * ds;
    pose.x += ds * std::cos(yaw_mid);
    pose.y += ds * std::sin(yaw_mid);
    pose.yaw = wrap_angle(pose.yaw + kappa * ds);
    v = v_next;
    traveled += ds;
    if (k % kStepsPerControl == 0) {
      out.plan.waypoints[k / kStepsPerControl - 1] = to_local(ego.pose, pose);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

AgentResult request_plan(const AgentBinding& binding, const AgentObservation& obs,
                         const AgentContext& context) {
  binding.validate();
  obs.validate();
  AgentResult result;
  switch (binding.kind) {
    case AgentKind::kRuleBased: {
      if (!context.world || !context.graph || !context.route) {
        throw ContractError("the rule-based agent needs world, map and route");
      }
      auto rb = rule_based_plan(*context.world, *context.graph, *context.route,
                                context.idm);
      result.plan = rb.plan;
      result.degraded = rb.degraded;
      break;
    }
    case AgentKind::kReplay: {
      if (!context.recorded_plans) {
        throw ContractError("the replay agent needs recorded plans");
      }
      auto it = context.recorded_plans->find(obs.frame_id);
      if (it == context.recorded_plans->end()) {
        throw ContractError("no recorded plan for frame " +
                            std::to_string(obs.frame_id));
      }
      result.plan = it->second;
      break;
    }
    case AgentKind::kConstantVelocity:
      result.plan = constant_velocity_plan(obs);
      break;
    case AgentKind::kHardLeft:
      result.plan = hard_left_plan(obs);
      break;
    case AgentKind::kRemote: {
      const auto t0 = std::chrono::steady_clock::now();
      result.plan = parse_agent_plan(
          http_post(binding.endpoint, "/plan", serialize(obs), binding.timeout_ms));
      result.latency_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
      break;
    }
  }
  try {
    result.plan.validate();
  } catch (const ValidationError& e) {
    throw ContractError(std::string("agent plan: ") + e.what());
  }
  if (result.plan.issued_at != obs.timestamp) {
    throw ContractError("agent plan issued_at does not echo the observation");
  }
  return result;
}

std::string handle_plan_body(std::string_view body, AgentKind kind) {
  const AgentObservation obs = parse_agent_observation(body);
  try {
    obs.validate();
  } catch (const ValidationError& e) {
    throw ProtocolError(e.what());
  }
  switch (kind) {
    case AgentKind::kConstantVelocity: return serialize(constant_velocity_plan(obs));
    case AgentKind::kHardLeft: return serialize(hard_left_plan(obs));
    default: break;
  }
  throw ContractError("only image-only builtin agents can be served");
}

}  // namespace arena
