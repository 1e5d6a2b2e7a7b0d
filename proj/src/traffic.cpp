#include "arena/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <cstdio>

#include "arena/errors.hpp"
#include "hash_util.hpp"

namespace arena {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kChangeThreshold = 0.2;   // m/s^2 hysteresis for changes
constexpr double kSafeDecel = 4.0;         // new follower braking limit
constexpr double kMinChangeRoom = 30.0;    // lane left before its end
constexpr double kPathLookahead = 80.0;
constexpr double kLeaderLookahead = 120.0;
constexpr double kYieldLookahead = 60.0;
constexpr double kZoneDecel = 2.0;  // braking used to meet slower lanes ahead
constexpr std::array<double, 3> kChangeDurations{2.5, 3.5, 4.5};
constexpr std::size_t kMaxJointEnumeration = 6561;  // 3^8

double quintic(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

double quintic_rate(double tau) {
  if (tau <= 0.0 || tau >= 1.0) return 0.0;
  return 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
}

std::vector<std::string> chain_of(const VehicleState& v) {
  std::vector<std::string> lanes{v.lane_id};
  lanes.insert(lanes.end(), v.next_lanes.begin(), v.next_lanes.end());
  return lanes;
}

double effective_desired(const TrafficConfig& config, const RoadGraph& graph,
                         const std::string& lane) {
  auto it = graph.lanes.find(lane);
  const double limit = it == graph.lanes.end() ? kInf : it->second.speed_limit;
  return std::min(config.idm.desired_speed, limit);
}

/// Pose on a lane chain at distance u past start_s, offset laterally by d.
Pose2 chain_pose(const RoadGraph& graph, const std::vector<std::string>& lanes,
                 double start_s, double u, double d, double d_slope) {
  double s = start_s + u;
  std::size_t i = 0;
  while (i + 1 < lanes.size() && s > graph.lane(lanes[i]).length()) {
    s -= graph.lane(lanes[i]).length();
    ++i;
  }
  const Lane& lane = graph.lane(lanes[i]);
  const Pose2 base = lane.pose(s);
  const double h = base.yaw;
  Vec2 p = base.position();
  // Past the end of a dead-end chain: extrapolate straight.
  if (s > lane.length()) p = p + heading_vector(h) * (s - lane.length());
  p = p + Vec2{-std::sin(h), std::cos(h)} * d;
  return {p.x, p.y, wrap_angle(h + std::atan(d_slope))};
}

double chain_length(const RoadGraph& graph,
                    const std::vector<std::string>& lanes, double start_s) {
  double total = -start_s;
  for (const auto& id : lanes) total += graph.lane(id).length();
  return total;
}

std::uint64_t lane_choice_hash(std::uint64_t seed, const std::string& vehicle,
                               const std::string& lane) {
  return detail::splitmix64(seed ^ detail::fnv1a(vehicle) ^
                            (detail::fnv1a(lane) << 1));
}

/// Extends the committed lane chain so it reaches kPathLookahead.
void extend_chain(VehicleState& v, const RoadGraph& graph,
                  std::uint64_t seed) {
  double ahead = graph.lane(v.lane_id).length() - v.lane_s;
  for (const auto& id : v.next_lanes) ahead += graph.lane(id).length();
  while (ahead < kPathLookahead) {
    const std::string& last =
        v.next_lanes.empty() ? v.lane_id : v.next_lanes.back();
    const Lane& lane = graph.lane(last);
    if (lane.successors.empty()) break;
    const auto pick =
        lane_choice_hash(seed, v.id, last) % lane.successors.size();
    v.next_lanes.push_back(lane.successors[pick]);
    ahead += graph.lane(v.next_lanes.back()).length();
  }
}

struct Rollout {
  std::vector<double> s;  // traveled distance per sample
  std::vector<double> v;
  std::vector<double> a;
  double min_gap = kInf;  // smallest gap to a real (vehicle) leader
};

struct LeaderPrediction {
  double gap = kInf;
  double speed = 0.0;
  bool vehicle = false;
};

/// Stretch of the path ahead, in metres from the vehicle, with a speed cap.
struct SpeedZone {
  double start = 0.0;
  double end = 0.0;
  double limit = kInf;
};

/// Highest speed at distance s that can still meet every zone ahead when
/// braking at kZoneDecel.
double zone_cap(std::span<const SpeedZone> zones, double s) {
  double cap = kInf;
  for (const auto& z : zones) {
    if (s > z.end) continue;
    const double d = std::max(0.0, z.start - s);
    cap = std::min(cap, std::sqrt(z.limit * z.limit + 2.0 * kZoneDecel * d));
  }
  return cap;
}

std::vector<SpeedZone> speed_zones(const RoadGraph& graph, const VehicleState& v) {
  std::vector<SpeedZone> zones;
  double offset = -v.lane_s;
  for (const auto& id : chain_of(v)) {
    auto it = graph.lanes.find(id);
    if (it == graph.lanes.end()) break;
    const double len = it->second.length();
    zones.push_back({offset, offset + len, it->second.speed_limit});
    offset += len;
    if (offset > kPathLookahead) break;
  }
  return zones;
}

/// IDM forward integration at 10 Hz against constant-velocity leaders.
Rollout idm_rollout(const IdmParams& p, double v0, double desired,
                    std::span<const LeaderPrediction> leaders,
                    std::span<const SpeedZone> zones = {}) {
  Rollout r;
  r.s.assign(kTrajectorySamples, 0.0);
  r.v.assign(kTrajectorySamples, 0.0);
  r.a.assign(kTrajectorySamples, 0.0);
  double s = 0.0;
  double v = v0;
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const double t = static_cast<double>(k) * kStepDt;
    const double v_des = std::min(desired, zone_cap(zones, s));
    double a = idm_accel(p, v, v_des, kInf, 0.0);
    for (const auto& l : leaders) {
      const double gap = l.gap + l.speed * t - s;
      // A vehicle already inside the minimum gap is only judged on whether
      // it closes in further.
      if (l.vehicle) r.min_gap = std::min(r.min_gap, gap + std::max(0.0, p.min_gap - l.gap));
      a = std::min(a, idm_accel(p, v, v_des, gap, v - l.speed));
    }
    a = std::clamp(a, -p.max_accel, p.max_accel);
    r.s[k] = s;
    r.v[k] = v;
    double v_next = v + a * kStepDt;
    double ds = 0.0;
    if (v_next < 0.0) {
      ds = a < 0.0 ? v * v / (-2.0 * a) : 0.0;
      a = -v / kStepDt;
      v_next = 0.0;
    } else {
      ds = 0.5 * (v + v_next) * kStepDt;
    }
    r.a[k] = a;
    s += ds;
    v = v_next;
  }
  return r;
}

Rollout brake_rollout(double v0, double decel) {
  Rollout r;
  r.s.assign(kTrajectorySamples, 0.0);
  r.v.assign(kTrajectorySamples, 0.0);
  r.a.assign(kTrajectorySamples, 0.0);
  double s = 0.0;
  double v = v0;
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    r.s[k] = s;
    r.v[k] = v;
    double a = v > 0.0 ? -decel : 0.0;
    double v_next = v + a * kStepDt;
    double ds = 0.5 * (v + v_next) * kStepDt;
    if (v_next < 0.0) {
      ds = v * v / (2.0 * decel);
      a = -v / kStepDt;
      v_next = 0.0;
    }
    r.a[k] = a;
    s += ds;
    v = v_next;
  }
  return r;
}

/// Largest curvature over the samples, using neighbors at least 1 m apart
/// along the trajectory. Returns 0 for trajectories shorter than 2 m.
double max_curvature(const Trajectory& traj) {
  std::vector<double> cum(traj.size(), 0.0);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    cum[i] = cum[i - 1] +
             (traj[i].pose.position() - traj[i - 1].pose.position()).norm();
  }
  double kmax = 0.0;
  if (cum.back() < 2.0) return 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    std::size_t lo = i;
    while (lo > 0 && cum[i] - cum[lo] < 1.0) --lo;
    std::size_t hi = i;
    while (hi + 1 < traj.size() && cum[hi] - cum[i] < 1.0) ++hi;
    if (cum[i] - cum[lo] < 1.0 || cum[hi] - cum[i] < 1.0) continue;
    const Vec2 a = traj[lo].pose.position();
    const Vec2 b = traj[i].pose.position();
    const Vec2 c = traj[hi].pose.position();
    const double ab = (b - a).norm();
    const double bc = (c - b).norm();
    const double ca = (a - c).norm();
    const double area2 = std::abs((b - a).cross(c - a));
    kmax = std::max(kmax, 2.0 * area2 / (ab * bc * ca));
  }
  return kmax;
}

struct Candidate {
  PlannedTrajectory plan;
  bool feasible = false;
};

/// Vehicle state after committing to a lane change into `target`.
VehicleState committed_change(const VehicleState& v, const RoadGraph& graph,
                              const std::string& target, double duration,
                              std::uint64_t seed) {
  VehicleState c = v;
  const Lane& lane = graph.lane(target);
  const auto proj = lane.project(v.pose.position());
  c.change_from = v.lane_id;
  c.lane_id = target;
  c.lane_s = proj.s;
  c.change_offset = proj.lateral;
  c.change_elapsed = 0.0;
  c.change_duration = duration;
  c.next_lanes.clear();
  extend_chain(c, graph, seed);
  return c;
}

Trajectory build_trajectory(const RoadGraph& graph, const VehicleState& v,
                            const Rollout& r) {
  Trajectory traj;
  traj.reserve(kTrajectorySamples);
  const auto lanes = chain_of(v);
  if (!graph.lanes.contains(v.lane_id)) {
    // Off the lane graph: continue along the current heading.
    const Vec2 dir = heading_vector(v.pose.yaw);
    for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
      const Vec2 p = v.pose.position() + dir * r.s[k];
      traj.push_back({static_cast<double>(k) * kStepDt, {p.x, p.y, v.pose.yaw},
                      r.v[k], r.a[k]});
    }
    return traj;
  }
  for (std::size_t k = 0; k < kTrajectorySamples; ++k) {
    const double t = static_cast<double>(k) * kStepDt;
    double d = 0.0;
    double slope = 0.0;
    if (v.changing_lane()) {
      const double tau = (v.change_elapsed + t) / v.change_duration;
      d = v.change_offset * (1.0 - quintic(tau));
      const double d_dot =
          -v.change_offset * quintic_rate(tau) / v.change_duration;
      slope = d_dot / std::max(r.v[k], 0.5);
    }
    traj.push_back({t, chain_pose(graph, lanes, v.lane_s, r.s[k], d, slope),
                    r.v[k], r.a[k]});
  }
  return traj;
}

std::vector<LeaderPrediction> leaders_for(const WorldState& world,
                                          const RoadGraph& graph,
                                          const VehicleState& v) {
  std::vector<LeaderPrediction> out;
  if (auto l = find_leader(world, graph, v.id, chain_of(v), v.lane_s,
                           kLeaderLookahead)) {
    out.push_back({l->gap, l->speed, l->id.rfind("yield:", 0) != 0});
  }
  if (v.changing_lane() && graph.lanes.contains(v.change_from)) {
    const Lane& old = graph.lane(v.change_from);
    const double s_old = old.project(v.pose.position()).s;
    std::vector<std::string> chain{v.change_from};
    if (auto l = find_leader(world, graph, v.id, chain, s_old,
                             kLeaderLookahead)) {
      if (l->id.rfind("yield:", 0) != 0) out.push_back({l->gap, l->speed, true});
    }
  }
  return out;
}

Candidate evaluate_candidate(const WorldState& world, const RoadGraph& graph,
                             const TrafficConfig& config,
                             const VehicleState& v, Maneuver maneuver,
                             double duration) {
  Candidate c;
  const auto leaders = leaders_for(world, graph, v);
  const double desired = config.idm.desired_speed;
  const auto zones = speed_zones(graph, v);
  const Rollout r = idm_rollout(config.idm, v.speed, desired, leaders, zones);
  c.plan.samples = build_trajectory(graph, v, r);
  c.plan.maneuver = maneuver;
  c.plan.duration = duration;

  bool ok = r.min_gap >= config.idm.min_gap - 1e-9;
  for (double a : r.a) ok = ok && std::abs(a) <= config.idm.max_accel + 1e-9;
  ok = ok && max_curvature(c.plan.samples) <= v.footprint.max_curvature();
  c.feasible = ok;

  const auto& w = config.trajectory_weights;
  const double mean_speed =
      std::accumulate(r.v.begin(), r.v.end(), 0.0) / r.v.size();
  const double efficiency =
      desired > 0.0 ? std::min(1.0, mean_speed / desired) : 1.0;
  double jerk = 0.0;
  for (std::size_t k = 1; k + 1 < r.a.size(); ++k) {
    jerk = std::max(jerk, std::abs(r.a[k] - r.a[k - 1]) / kStepDt);
  }
  double lat = 0.0;
  if (v.changing_lane()) {
    // Peak lateral acceleration of the quintic profile.
    lat = 5.7735 * std::abs(v.change_offset) /
          (v.change_duration * v.change_duration);
  }
  const double comfort = 1.0 - std::min(1.0, 0.5 * (jerk / 8.0 + lat / 4.9));
  const double margin = config.idm.min_gap + v.speed * config.idm.time_headway;
  const double safety =
      std::isinf(r.min_gap)
          ? 1.0
          : std::clamp((r.min_gap - config.idm.min_gap) / std::max(margin, 1.0),
                       0.0, 1.0);
  const double wsum = w.efficiency + w.comfort + w.safety;
  c.plan.score =
      (w.efficiency * efficiency + w.comfort * comfort + w.safety * safety) /
      wsum;
  return c;
}

PlannedTrajectory emergency_plan(const RoadGraph& graph,
                                 const TrafficConfig& config,
                                 const VehicleState& v) {
  PlannedTrajectory p;
  const Rollout r = brake_rollout(v.speed, 1.5 * config.idm.comfort_decel);
  p.samples = build_trajectory(graph, v, r);
  p.degraded = true;
  return p;
}

PlannedTrajectory plan_vehicle(const WorldState& world, const RoadGraph& graph,
                               const TrafficConfig& config,
                               const VehicleState& v,
                               const ManeuverDecision* decision) {
  std::vector<Candidate> candidates;
  const bool wants_change = decision && !v.changing_lane() &&
                            decision->maneuver != Maneuver::kKeepLane &&
                            graph.lanes.contains(decision->target_lane);
  if (wants_change) {
    for (double duration : kChangeDurations) {
      const VehicleState c = committed_change(v, graph, decision->target_lane,
                                              duration, config.seed);
      candidates.push_back(evaluate_candidate(world, graph, config, c,
                                              decision->maneuver, duration));
    }
  }
  Candidate keep = evaluate_candidate(world, graph, config, v,
                                      Maneuver::kKeepLane, 0.0);
  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (c.feasible && (!best || c.plan.score > best->plan.score + 1e-12)) {
      best = &c;
    }
  }
  if (!best && keep.feasible) best = &keep;
  if (!best) return emergency_plan(graph, config, v);
  return best->plan;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(VehicleRole role) {
  return role == VehicleRole::kEgo ? "ego" : "background";
}
std::string_view to_string(EgoMode mode) {
  return mode == EgoMode::kOpenLoop ? "open_loop" : "closed_loop";
}
std::string_view to_string(Maneuver m) {
  switch (m) {
    case Maneuver::kChangeLeft: return "lane_change_left";
    case Maneuver::kChangeRight: return "lane_change_right";
    case Maneuver::kKeepLane: return "keep_lane";
  }
  return "keep_lane";
}
EgoMode ego_mode_from_string(std::string_view s) {
  if (s == "open_loop") return EgoMode::kOpenLoop;
  if (s == "closed_loop") return EgoMode::kClosedLoop;
  throw ValidationError("mode", "expected open_loop or closed_loop");
}
Maneuver maneuver_from_string(std::string_view s) {
  for (auto m : {Maneuver::kChangeLeft, Maneuver::kChangeRight,
                 Maneuver::kKeepLane}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("maneuver", "unknown maneuver '" + std::string(s) + "'");
}

double Footprint::max_curvature() const {
  constexpr double kMaxSteer = 40.0 * std::numbers::pi / 180.0;
  return std::tan(kMaxSteer) / (0.6 * length);
}

double VehicleState::lateral_offset() const {
  if (!changing_lane() || change_duration <= 0.0) return 0.0;
  return change_offset * (1.0 - quintic(change_elapsed / change_duration));
}

void TrafficConfig::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!(cooperation_factor >= 0.0 && cooperation_factor <= 1.0)) {
    throw ValidationError("traffic.cooperation_factor", "must lie in [0, 1]");
  }
  const auto& w = trajectory_weights;
  if (!finite_nonneg(w.efficiency) || !finite_nonneg(w.comfort) ||
      !finite_nonneg(w.safety)) {
    throw ValidationError("traffic.trajectory_weights",
                          "weights must be nonnegative");
  }
  if (w.efficiency + w.comfort + w.safety <= 0.0) {
    throw ValidationError("traffic.trajectory_weights",
                          "weights must not all be zero");
  }
  if (!finite_nonneg(spawn_density)) {
    throw ValidationError("traffic.spawn_density", "must be nonnegative");
  }
  if (!finite_nonneg(idm.desired_speed)) {
    throw ValidationError("traffic.idm.desired_speed", "must be nonnegative");
  }
  if (!(idm.time_headway > 0.0) || !std::isfinite(idm.time_headway)) {
    throw ValidationError("traffic.idm.time_headway", "must be positive");
  }
  if (!finite_nonneg(idm.min_gap)) {
    throw ValidationError("traffic.idm.min_gap", "must be nonnegative");
  }
  if (!(idm.max_accel > 0.0) || !std::isfinite(idm.max_accel)) {
    throw ValidationError("traffic.idm.max_accel", "must be positive");
  }
  if (!(idm.comfort_decel > 0.0) || !std::isfinite(idm.comfort_decel)) {
    throw ValidationError("traffic.idm.comfort_decel", "must be positive");
  }
}

void AgentPlan::validate() const {
  if (!std::isfinite(issued_at)) {
    throw ValidationError("plan.issued_at", "must be finite");
  }
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const auto& w = waypoints[i];
    if (!std::isfinite(w.x) || !std::isfinite(w.y) || !std::isfinite(w.yaw)) {
      throw ValidationError("plan.waypoints[" + std::to_string(i) + "]",
                            "non-finite coordinate");
    }
  }
}

const VehicleState& WorldState::ego() const {
  auto it = vehicles.find(kEgoId);
  if (it == vehicles.end()) throw ContractError("world has no ego vehicle");
  return it->second;
}

VehicleState& WorldState::ego() {
  auto it = vehicles.find(kEgoId);
  if (it == vehicles.end()) throw ContractError("world has no ego vehicle");
  return it->second;
}

double idm_accel(const IdmParams& p, double speed, double desired_speed,
                 double gap, double closing_speed) {
  double free_term = 0.0;
  if (desired_speed > 0.0) {
    const double ratio = speed / desired_speed;
    free_term = p.max_accel * (1.0 - ratio * ratio * ratio * ratio);
  } else {
    free_term = speed > 0.0 ? -p.comfort_decel : 0.0;
  }
  if (std::isinf(gap)) return free_term;
  const double dynamic =
      speed * p.time_headway +
      speed * closing_speed / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  const double desired_gap = p.min_gap + std::max(0.0, dynamic);
  const double ratio = desired_gap / std::max(gap, 0.01);
  const double interaction = -p.max_accel * ratio * ratio;
  if (desired_speed <= 0.0) return std::min(free_term, interaction);
  return free_term + interaction;
}

// ---------------------------------------------------------------------------
// Chains and leaders

std::optional<double> distance_along(const RoadGraph& graph,
                                     const std::vector<std::string>& lanes,
                                     double start_s, const std::string& lane,
                                     double s) {
  double offset = -start_s;
  for (const auto& id : lanes) {
    if (id == lane) return offset + s;
    offset += graph.lane(id).length();
  }
  return std::nullopt;
}

std::optional<LeaderInfo> find_leader(const WorldState& world,
                                      const RoadGraph& graph,
                                      const std::string& self_id,
                                      const std::vector<std::string>& lanes,
                                      double start_s, double lookahead) {
  std::optional<LeaderInfo> best;
  auto self_it = world.vehicles.find(self_id);
  const Footprint self_fp =
      self_it == world.vehicles.end() ? Footprint{} : self_it->second.footprint;
  const double self_speed =
      self_it == world.vehicles.end() ? 0.0 : self_it->second.speed;
  auto consider = [&](LeaderInfo info) {
    if (!best || info.gap < best->gap ||
        (info.gap == best->gap && info.id < best->id)) {
      best = std::move(info);
    }
  };

  for (const auto& [id, other] : world.vehicles) {
    if (id == self_id || other.lane_id == kOffRoadLane) continue;
    std::optional<double> d;
    if (graph.lanes.contains(other.lane_id)) {
      d = distance_along(graph, lanes, start_s, other.lane_id, other.lane_s);
    }
    if (other.changing_lane() && graph.lanes.contains(other.change_from) &&
        std::abs(other.lateral_offset()) > 0.5) {
      const Lane& from = graph.lane(other.change_from);
      const double s_from = from.project(other.pose.position()).s;
      auto d2 = distance_along(graph, lanes, start_s, other.change_from, s_from);
      if (d2 && (!d || *d2 < *d)) d = d2;
    }
    double speed = other.speed;
    if (!d) {
      // Off-chain vehicles still block when they sit on our path, such as
      // on a sibling connector that has not diverged yet.
      const double reach = 0.5 * (self_fp.width + other.footprint.width);
      double offset = -start_s;
      for (const auto& lane_id : lanes) {
        if (offset > lookahead) break;
        const Lane& lane = graph.lane(lane_id);
        const Rect& box = graph.lane_bounds.at(lane_id);
        const Vec2 q = other.pose.position();
        if (q.x < box.min_x - reach || q.x > box.max_x + reach ||
            q.y < box.min_y - reach || q.y > box.max_y + reach) {
          offset += lane.length();
          continue;
        }
        const auto proj = lane.project(q);
        if (proj.distance < reach && proj.s > 0.0 && proj.s < lane.length()) {
          d = offset + proj.s;
          speed = std::max(0.0, other.speed * std::cos(wrap_angle(
                                    other.pose.yaw - lane.heading(proj.s))));
          break;
        }
        offset += lane.length();
      }
    }
    if (!d || *d <= 0.0 || *d > lookahead) continue;
    const double gap =
        *d - 0.5 * (self_fp.length + other.footprint.length);
    consider({id, gap, speed});
  }

  // Junction conflicts along the chain. A vehicle already on the conflicting
  // connector goes first; otherwise whoever arrives first does.
  const double self_eta_speed = std::max(self_speed, 2.0);
  for (const auto& lane_id : lanes) {
    auto cit = graph.conflicts.find(lane_id);
    if (cit == graph.conflicts.end()) continue;
    for (const auto& conflict : cit->second) {
      const auto d_self =
          distance_along(graph, lanes, start_s, lane_id, conflict.s_self);
      if (!d_self || *d_self > kYieldLookahead) continue;
      const double stop_gap = *d_self - 0.5 * self_fp.length - 2.0;
      if (*d_self - 0.5 * self_fp.length < 1.0) continue;  // already inside
      const double eta_self = *d_self / self_eta_speed;
      const bool self_inside =
          lane_id == lanes.front() && graph.lanes.at(lane_id).connector;
      for (const auto& [id, other] : world.vehicles) {
        if (id == self_id || !graph.lanes.contains(other.lane_id)) continue;
        const auto d_other =
            distance_along(graph, chain_of(other), other.lane_s,
                           conflict.other_lane, conflict.s_other);
        if (!d_other) continue;
        const double clear = 0.5 * other.footprint.length + 3.0;
        if (*d_other < -clear || *d_other > kYieldLookahead) continue;
        const bool other_inside = other.lane_id == conflict.other_lane;
        if (self_inside && !other_inside) continue;
        const double eta_other =
            *d_other <= 0.0 ? -1.0 : *d_other / std::max(other.speed, 2.0);
        const bool yield = (other_inside && !self_inside) || eta_other < eta_self ||
                           (eta_other == eta_self && id < self_id);
        if (yield) consider({"yield:" + conflict.other_lane, stop_gap, 0.0});
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Spawning

WorldState spawn_background_traffic(const RoadGraph& graph,
                                    const TrafficConfig& config,
                                    const EgoSpawn& ego_spawn) {
  config.validate();
  if (graph.empty()) throw ContractError("cannot spawn on an empty graph");
  WorldState world;
  {
    const Lane& lane = graph.lane(ego_spawn.lane_id);
    VehicleState ego;
    ego.id = kEgoId;
    ego.role = VehicleRole::kEgo;
    ego.lane_id = lane.id;
    ego.lane_s = std::clamp(ego_spawn.s, 0.0, lane.length());
    ego.pose = lane.pose(ego.lane_s);
    ego.speed = ego_spawn.speed;
    for (const auto& id : ego_spawn.route_lanes) {
      if (ego.next_lanes.empty() && id == ego.lane_id) continue;
      ego.next_lanes.push_back(id);
    }
    world.vehicles[ego.id] = ego;
  }
  const VehicleState& ego = world.vehicles.at(kEgoId);

  const Footprint fp;
  const double spacing_min = config.idm.min_gap + fp.length;
  std::size_t achievable = 0;
  bool saturated = false;
  struct Slot {
    std::string lane;
    double s;
    double speed;
  };
  std::vector<Slot> slots;
  for (const auto& [id, lane] : graph.lanes) {
    if (lane.connector) continue;
    const double len = lane.length();
    const auto n = static_cast<std::size_t>(
        std::floor(config.spawn_density * len / 1000.0 + 0.5));
    const auto capacity = static_cast<std::size_t>(std::floor(len / spacing_min));
    achievable += std::min(n, capacity);
    if (n == 0) continue;
    if (n > capacity) {
      saturated = true;
      continue;
    }
    const double spacing = len / static_cast<double>(n);
    const double jitter =
        std::max(0.0, std::min(0.25 * spacing, 0.5 * (spacing - spacing_min)));
    detail::SplitMix rng(config.seed ^ detail::fnv1a(id));
    for (std::size_t k = 0; k < n; ++k) {
      const double u = rng.uniform();
      const double v = rng.uniform();
      const double s =
          (static_cast<double>(k) + 0.5) * spacing + jitter * (2.0 * u - 1.0);
      const double speed = std::min(config.idm.desired_speed, lane.speed_limit) *
                           (0.6 + 0.4 * v);
      slots.push_back({id, s, speed});
    }
  }
  if (saturated) {
    throw SaturationError(
        "spawn density exceeds lane capacity; achievable vehicle count " +
            std::to_string(achievable),
        achievable);
  }
  std::size_t counter = 0;
  for (const auto& slot : slots) {
    const Lane& lane = graph.lane(slot.lane);
    const Pose2 pose = lane.pose(slot.s);
    if ((pose.position() - ego.pose.position()).norm() < spacing_min + 5.0) {
      continue;
    }
    VehicleState v;
    char buf[16];
    std::snprintf(buf, sizeof buf, "bg-%04zu", ++counter);
    v.id = buf;
    v.lane_id = slot.lane;
    v.lane_s = slot.s;
    v.pose = pose;
    v.speed = slot.speed;
    extend_chain(v, graph, config.seed);
    world.vehicles[v.id] = std::move(v);
  }
  return world;
}

// ---------------------------------------------------------------------------
// Decisions

std::map<std::string, std::vector<ManeuverOption>> maneuver_options(
    const WorldState& world, const RoadGraph& graph,
    const TrafficConfig& config) {
  std::map<std::string, std::vector<ManeuverOption>> options;
  const auto& p = config.idm;
  auto clamp_a = [&](double a) { return std::clamp(a, -9.0, p.max_accel); };

  // Vehicles indexed by lane with their arclength on that lane.
  struct OnLane {
    double s;
    const VehicleState* v;
  };
  std::map<std::string, std::vector<OnLane>> by_lane;
  for (const auto& [id, v] : world.vehicles) {
    if (!graph.lanes.contains(v.lane_id)) continue;
    by_lane[v.lane_id].push_back({v.lane_s, &v});
    if (v.changing_lane() && graph.lanes.contains(v.change_from)) {
      by_lane[v.change_from].push_back(
          {graph.lane(v.change_from).project(v.pose.position()).s, &v});
    }
  }
  auto neighbors_at = [&](const std::string& lane, double s,
                          const std::string& skip) {
    const OnLane* lead = nullptr;
    const OnLane* follow = nullptr;
    auto it = by_lane.find(lane);
    if (it == by_lane.end()) return std::pair{lead, follow};
    for (const auto& o : it->second) {
      if (o.v->id == skip) continue;
      if (o.s >= s) {
        if (!lead || o.s < lead->s) lead = &o;
      } else if (!follow || o.s > follow->s) {
        follow = &o;
      }
    }
    return std::pair{lead, follow};
  };
  auto accel_behind = [&](const VehicleState& f, double f_s,
                          const VehicleState* leader, double leader_s,
                          const std::string& lane) {
    const double desired = effective_desired(config, graph, lane);
    if (!leader) return clamp_a(idm_accel(p, f.speed, desired, kInf, 0.0));
    const double gap =
        leader_s - f_s - 0.5 * (f.footprint.length + leader->footprint.length);
    return clamp_a(idm_accel(p, f.speed, desired, gap, f.speed - leader->speed));
  };

  for (const auto& [id, v] : world.vehicles) {
    if (v.role != VehicleRole::kBackground) continue;
    auto& opts = options[id];
    opts.push_back({Maneuver::kKeepLane, v.lane_id, 0.0, 0.0, ""});
    if (v.changing_lane() || !graph.lanes.contains(v.lane_id)) continue;
    const Lane& lane = graph.lane(v.lane_id);
    if (lane.connector || lane.length() - v.lane_s < kMinChangeRoom ||
        v.lane_s < 5.0) {
      continue;
    }
    const double desired = effective_desired(config, graph, v.lane_id);
    double a_cur = clamp_a(idm_accel(p, v.speed, desired, kInf, 0.0));
    if (auto l = find_leader(world, graph, id, chain_of(v), v.lane_s,
                             kLeaderLookahead)) {
      a_cur = clamp_a(idm_accel(p, v.speed, desired, l->gap, v.speed - l->speed));
    }
    const auto [old_lead, old_follow] = neighbors_at(v.lane_id, v.lane_s, id);

    for (auto [m, nb] : {std::pair{Maneuver::kChangeLeft, lane.left_neighbor},
                         std::pair{Maneuver::kChangeRight, lane.right_neighbor}}) {
      if (!nb) continue;
      const Lane& target = graph.lane(*nb);
      const double s_t = target.project(v.pose.position()).s;
      if (target.length() - s_t < kMinChangeRoom) continue;
      const auto [lead, follow] = neighbors_at(*nb, s_t, id);
      const double a_new = accel_behind(v, s_t, lead ? lead->v : nullptr,
                                        lead ? lead->s : 0.0, *nb);
      if (lead) {
        const double gap = lead->s - s_t -
                           0.5 * (v.footprint.length + lead->v->footprint.length);
        if (gap < p.min_gap) continue;
      }
      double neighbor_gain = 0.0;
      if (follow) {
        const double gap = s_t - follow->s -
                           0.5 * (v.footprint.length + follow->v->footprint.length);
        const double f_new = accel_behind(*follow->v, follow->s, &v, s_t, *nb);
        if (gap < p.min_gap || f_new < -kSafeDecel) continue;
        const double f_cur =
            accel_behind(*follow->v, follow->s, lead ? lead->v : nullptr,
                         lead ? lead->s : 0.0, *nb);
        neighbor_gain += f_new - f_cur;
      }
      if (old_follow) {
        const double f_cur =
            accel_behind(*old_follow->v, old_follow->s, &v, v.lane_s, v.lane_id);
        const double f_new = accel_behind(
            *old_follow->v, old_follow->s, old_lead ? old_lead->v : nullptr,
            old_lead ? old_lead->s : 0.0, v.lane_id);
        neighbor_gain += f_new - f_cur;
      }
      ManeuverOption opt;
      opt.maneuver = m;
      opt.target_lane = *nb;
      opt.own_gain = a_new - a_cur - kChangeThreshold;
      opt.neighbor_gain = neighbor_gain;
      opt.gap_key = *nb + "|" + (lead ? lead->v->id : "-") + "|" +
                    (follow ? follow->v->id : "-");
      opts.insert(opts.end() - 1, opt);  // keep-lane stays last
    }
  }
  return options;
}

std::map<std::string, std::size_t> solve_joint_maneuvers(
    const std::map<std::string, std::vector<ManeuverOption>>& options,
    const std::vector<std::string>& group, double cooperation) {
  std::map<std::string, std::size_t> best_choice;
  std::size_t combos = 1;
  for (const auto& id : group) {
    combos *= options.at(id).size();
    if (combos > kMaxJointEnumeration) break;
  }
  if (combos > kMaxJointEnumeration) {
    // Greedy fallback in id order for oversized groups.
    std::set<std::string> taken;
    for (const auto& id : group) {
      const auto& opts = options.at(id);
      std::size_t pick = opts.size() - 1;
      double best = opts.back().utility(cooperation);
      for (std::size_t i = 0; i + 1 < opts.size(); ++i) {
        const double u = opts[i].utility(cooperation);
        if (!taken.contains(opts[i].gap_key) && u > best + 1e-12) {
          best = u;
          pick = i;
        }
      }
      if (!opts[pick].gap_key.empty()) taken.insert(opts[pick].gap_key);
      best_choice[id] = pick;
    }
    return best_choice;
  }

  std::vector<std::size_t> idx(group.size(), 0);
  double best_total = -kInf;
  std::vector<std::size_t> best_idx = idx;
  // Odometer with the lowest id as the most significant digit, so the first
  // maximum found favors changes for lower ids.
  while (true) {
    std::set<std::string> gaps;
    bool conflict = false;
    double total = 0.0;
    for (std::size_t g = 0; g < group.size() && !conflict; ++g) {
      const auto& opt = options.at(group[g])[idx[g]];
      if (!opt.gap_key.empty() && !gaps.insert(opt.gap_key).second) {
        conflict = true;
      }
      total += opt.utility(cooperation);
    }
    if (!conflict && total > best_total + 1e-12) {
      best_total = total;
      best_idx = idx;
    }
    std::size_t g = group.size();
    while (g > 0) {
      --g;
      if (++idx[g] < options.at(group[g]).size()) break;
      idx[g] = 0;
      if (g == 0) {
        g = group.size() + 1;
        break;
      }
    }
    if (group.empty() || g == group.size() + 1) break;
  }
  for (std::size_t g = 0; g < group.size(); ++g) best_choice[group[g]] = best_idx[g];
  return best_choice;
}

ManeuverSet decide_maneuvers(const WorldState& world, const RoadGraph& graph,
                             const TrafficConfig& config) {
  const auto options = maneuver_options(world, graph, config);
  std::vector<std::string> ids;
  for (const auto& [id, opts] : options) ids.push_back(id);

  // Interaction groups: union-find over the 30 m radius.
  std::vector<std::size_t> parent(ids.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Vec2 pi = world.vehicles.at(ids[i]).pose.position();
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const Vec2 pj = world.vehicles.at(ids[j]).pose.position();
      if ((pi - pj).norm() <= kInteractionRadius) {
        parent[find(j)] = find(i);
      }
    }
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[find(i)].push_back(ids[i]);

  std::map<std::string, std::size_t> choice;
  for (const auto& [root, group] : groups) {
    for (const auto& [id, pick] :
         solve_joint_maneuvers(options, group, config.cooperation_factor)) {
      choice[id] = pick;
    }
  }
  // Gaps claimed across groups: the higher utility keeps it, then lower id.
  std::map<std::string, std::string> gap_owner;
  for (const auto& [id, pick] : choice) {
    const auto& opt = options.at(id)[pick];
    if (opt.gap_key.empty()) continue;
    auto [it, inserted] = gap_owner.emplace(opt.gap_key, id);
    if (inserted) continue;
    const auto& other = options.at(it->second)[choice[it->second]];
    if (opt.utility(config.cooperation_factor) >
        other.utility(config.cooperation_factor) + 1e-12) {
      choice[it->second] = options.at(it->second).size() - 1;
      it->second = id;
    } else {
      choice[id] = options.at(id).size() - 1;
    }
  }

  ManeuverSet out;
  for (const auto& [id, pick] : choice) {
    const auto& opt = options.at(id)[pick];
    ManeuverDecision d;
    d.maneuver = opt.maneuver;
    d.target_lane = opt.target_lane;
    d.target_speed = effective_desired(config, graph, opt.target_lane);
    d.utility = opt.utility(config.cooperation_factor);
    out[id] = d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planning and stepping

std::map<std::string, PlannedTrajectory> plan_trajectories(
    const WorldState& world, const ManeuverSet& maneuvers,
    const RoadGraph& graph, const TrafficConfig& config) {
  std::map<std::string, PlannedTrajectory> plans;
  for (const auto& [id, v] : world.vehicles) {
    if (v.role == VehicleRole::kEgo) {
      if (world.ego_mode == EgoMode::kOpenLoop) {
        plans[id] = engine_ego_plan(world, graph, config);
      }
      continue;
    }
    auto it = maneuvers.find(id);
    plans[id] = plan_vehicle(world, graph, config, v,
                             it == maneuvers.end() ? nullptr : &it->second);
  }
  return plans;
}

PlannedTrajectory engine_ego_plan(const WorldState& world,
                                  const RoadGraph& graph,
                                  const TrafficConfig& config) {
  const VehicleState& ego = world.ego();
  if (!graph.lanes.contains(ego.lane_id)) {
    return emergency_plan(graph, config, ego);
  }
  VehicleState v = ego;
  v.change_from.clear();
  auto leaders = leaders_for(world, graph, v);
  // The ego stops at the end of a dead-end chain instead of leaving it.
  const auto lanes = chain_of(v);
  if (graph.lane(lanes.back()).successors.empty()) {
    const double remaining = chain_length(graph, lanes, v.lane_s);
    leaders.push_back({remaining - 0.5 * v.footprint.length, 0.0, false});
  }
  const double desired = config.idm.desired_speed;
  const auto zones = speed_zones(graph, v);
  const Rollout r = idm_rollout(config.idm, v.speed, desired, leaders, zones);
  PlannedTrajectory p;
  p.samples = build_trajectory(graph, v, r);
  p.score = 1.0;
  return p;
}

namespace {

/// Moves a lane-following vehicle by `ds` along its chain. Returns false if
/// it ran off the end of a dead end.
bool advance_along_chain(VehicleState& v, const RoadGraph& graph, double ds,
                         std::uint64_t seed) {
  v.lane_s += ds;
  while (v.lane_s > graph.lane(v.lane_id).length()) {
    if (v.role == VehicleRole::kBackground) extend_chain(v, graph, seed);
    if (v.next_lanes.empty()) return false;
    v.lane_s -= graph.lane(v.lane_id).length();
    v.lane_id = v.next_lanes.front();
    v.next_lanes.erase(v.next_lanes.begin());
    v.change_from.clear();
  }
  // The ego keeps exactly its route lanes.
  if (v.role == VehicleRole::kBackground) extend_chain(v, graph, seed);
  return true;
}

Pose2 lane_follow_pose(const VehicleState& v, const RoadGraph& graph) {
  double slope = 0.0;
  if (v.changing_lane()) {
    const double tau = v.change_elapsed / v.change_duration;
    const double d_dot =
        -v.change_offset * quintic_rate(tau) / v.change_duration;
    slope = d_dot / std::max(v.speed, 0.5);
  }
  return chain_pose(graph, chain_of(v), v.lane_s, 0.0, v.lateral_offset(),
                    slope);
}

/// Re-associates a freely driven ego with its lane chain.
void track_ego_lane(VehicleState& ego, const RoadGraph& graph) {
  const Vec2 p = ego.pose.position();
  auto chain = chain_of(ego);
  for (std::size_t i = 0; i < chain.size() && i < 4; ++i) {
    if (!graph.lanes.contains(chain[i])) continue;
    const Lane& lane = graph.lane(chain[i]);
    const auto proj = lane.project(p);
    const bool interior = proj.s < lane.length() - 1e-9 || i + 1 == chain.size();
    if (proj.distance <= 0.5 * lane.width + 1.0 && interior) {
      ego.lane_id = chain[i];
      ego.lane_s = proj.s;
      ego.next_lanes.assign(chain.begin() + static_cast<long>(i) + 1, chain.end());
      return;
    }
  }
  if (!graph.in_drivable_area(p)) {
    if (ego.lane_id != kOffRoadLane) {
      // Remember the chain so tracking can resume if the ego comes back.
      if (graph.lanes.contains(ego.lane_id)) {
        ego.next_lanes.insert(ego.next_lanes.begin(), ego.lane_id);
      }
      ego.lane_id = kOffRoadLane;
    }
    return;
  }
  if (auto snap = snap_to_lane(graph, p, 3.0)) {
    if (ego.lane_id == kOffRoadLane && !ego.next_lanes.empty() &&
        ego.next_lanes.front() == snap->lane_id) {
      ego.next_lanes.erase(ego.next_lanes.begin());
    }
    ego.lane_id = snap->lane_id;
    ego.lane_s = snap->s;
  }
}

}  // namespace

WorldState step(const WorldState& world, double dt, const RoadGraph& graph,
                const TrafficConfig& config) {
  if (std::abs(dt - kStepDt) > 1e-12) {
    throw ContractError("step size must be exactly 0.1 s");
  }
  if (world.ego_mode == EgoMode::kClosedLoop && !world.active_ego_plan) {
    throw ContractError("closed-loop step without an active ego plan");
  }
  WorldState next = world;
  next.despawned.clear();
  next.degraded.clear();
  if (world.tick % kStepsPerControl == 0) {
    next.maneuvers = decide_maneuvers(world, graph, config);
  }
  const auto plans = plan_trajectories(world, next.maneuvers, graph, config);

  for (const auto& [id, plan] : plans) {
    VehicleState& v = next.vehicles.at(id);
    if (plan.degraded) next.degraded.push_back(id);
    if (plan.maneuver != Maneuver::kKeepLane && !v.changing_lane()) {
      const auto& target = next.maneuvers.at(id).target_lane;
      v = committed_change(v, graph, target, plan.duration, config.seed);
    }
    const auto& s1 = plan.samples[1];
    const double ds = s1.speed >= 0.0
                          ? 0.5 * (plan.samples[0].speed + s1.speed) * kStepDt
                          : 0.0;
    // Travel matches the rollout exactly, including the stopping case.
    const double traveled = [&] {
      const double v0 = plan.samples[0].speed;
      const double a0 = plan.samples[0].accel;
      if (s1.speed == 0.0 && v0 > 0.0 && v0 + a0 * kStepDt <= 0.0) {
        return a0 < 0.0 ? std::min(ds, v0 * kStepDt) : ds;
      }
      return ds;
    }();
    v.speed = s1.speed;
    v.accel = plan.samples[0].accel;
    if (v.changing_lane()) {
      v.change_elapsed += kStepDt;
      if (v.change_elapsed >= v.change_duration - 1e-9) {
        v.change_from.clear();
        v.change_offset = 0.0;
        v.change_elapsed = 0.0;
        v.change_duration = 0.0;
      }
    }
    const bool alive = advance_along_chain(v, graph, traveled, config.seed);
    if (!alive && v.role == VehicleRole::kBackground) {
      next.despawned.push_back(id);
      continue;
    }
    if (!alive) {
      v.lane_s = graph.lane(v.lane_id).length();
      v.speed = 0.0;
    }
    v.pose = lane_follow_pose(v, graph);
  }
  for (const auto& id : next.despawned) next.vehicles.erase(id);

  if (world.ego_mode == EgoMode::kClosedLoop) {
    VehicleState& ego = next.ego();
    const EgoPlan& plan = *world.active_ego_plan;
    const double elapsed = world.sim_time + kStepDt - plan.issued_at;
    const auto k = static_cast<std::size_t>(std::clamp<long>(
        std::lround(elapsed / kStepDt), 0, static_cast<long>(plan.samples.size()) - 1));
    const Pose2 target = plan.samples[k];
    const double speed = (target.position() - ego.pose.position()).norm() / kStepDt;
    ego.accel = (speed - ego.speed) / kStepDt;
    ego.speed = speed;
    ego.pose = target;
    track_ego_lane(ego, graph);
  }

  next.tick = world.tick + 1;
  next.sim_time = static_cast<double>(next.tick) * kStepDt;
  next.collisions = detect_collisions(next);
  return next;
}

std::vector<CollisionEvent> detect_collisions(const WorldState& world) {
  std::vector<CollisionEvent> events;
  std::vector<const VehicleState*> vs;
  for (const auto& [id, v] : world.vehicles) vs.push_back(&v);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const OrientedBox a = vs[i]->box();
    const double ra = 0.5 * std::hypot(a.length, a.width);
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      const OrientedBox b = vs[j]->box();
      const double rb = 0.5 * std::hypot(b.length, b.width);
      if ((a.center - b.center).norm() > ra + rb) continue;
      const double sep = sat_separation(a, b);
      if (sep < 0.0) {
        events.push_back({world.sim_time, {vs[i]->id, vs[j]->id}, -sep});
      }
    }
  }
  return events;
}

std::vector<Pose2> interpolate_agent_plan(const AgentPlan& plan,
                                          const Pose2& current_pose) {
  plan.validate();
  if (!std::isfinite(current_pose.x) || !std::isfinite(current_pose.y) ||
      !std::isfinite(current_pose.yaw)) {
    throw ValidationError("current_pose", "non-finite coordinate");
  }
  std::vector<Pose2> out;
  out.reserve(kTrajectorySamples);
  out.push_back(current_pose);
  Pose2 prev = current_pose;
  for (const auto& knot : plan.waypoints) {
    const Vec2 a = prev.position();
    const Vec2 d = knot.position() - a;
    const double yaw =
        d.norm() > 1e-9 ? std::atan2(d.y, d.x) : prev.yaw;
    for (int j = 1; j < kStepsPerControl; ++j) {
      const double f = static_cast<double>(j) / kStepsPerControl;
      out.push_back({a.x + d.x * f, a.y + d.y * f, yaw});
    }
    out.push_back(knot);
    prev = knot;
  }
  return out;
}

WorldState set_ego_mode(const WorldState& world, EgoMode mode,
                        const std::optional<AgentPlan>& plan) {
  if (world.tick > 0 && mode != world.ego_mode) {
    throw ContractError("ego mode cannot change mid-episode");
  }
  WorldState next = world;
  next.ego_mode = mode;
  if (!plan) return next;
  next.recorded_plan = *plan;
  if (mode == EgoMode::kClosedLoop) {
    const Pose2 origin = world.ego().pose;
    EgoPlan installed;
    installed.issued_at = plan->issued_at;
    for (const auto& p : interpolate_agent_plan(*plan, Pose2{})) {
      installed.samples.push_back(to_world(origin, p));
    }
    next.active_ego_plan = std::move(installed);
  }
  return next;
}

}  // namespace arena
