#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arena/geometry.hpp"
#include "arena/roadnet.hpp"

namespace arena {

/// Physics step; the only step size `step` accepts.
inline constexpr double kStepDt = 0.1;
/// Physics steps per control tick (10 Hz physics, 2 Hz control).
inline constexpr int kStepsPerControl = 5;
/// Planned trajectories cover 3 s at 10 Hz including t = 0.
inline constexpr std::size_t kTrajectorySamples = 31;
inline constexpr double kHorizon = 3.0;
/// Radius within which maneuvers are decided jointly.
inline constexpr double kInteractionRadius = 30.0;
inline constexpr char kOffRoadLane[] = "off-road";
inline constexpr char kEgoId[] = "ego";

enum class VehicleRole : std::uint8_t { kEgo, kBackground };
enum class EgoMode : std::uint8_t { kOpenLoop, kClosedLoop };
enum class Maneuver : std::uint8_t { kChangeLeft, kChangeRight, kKeepLane };

std::string_view to_string(VehicleRole role);
std::string_view to_string(EgoMode mode);
std::string_view to_string(Maneuver m);
EgoMode ego_mode_from_string(std::string_view s);
Maneuver maneuver_from_string(std::string_view s);

struct Footprint {
  double length = 4.6;
  double width = 1.8;
  double height = 1.6;

  /// Curvature limit from a bicycle model with wheelbase 0.6 * length and
  /// 40 degrees of steering.
  double max_curvature() const;
  bool operator==(const Footprint&) const = default;
};

struct VehicleState {
  std::string id;
  Pose2 pose;
  double speed = 0.0;
  double accel = 0.0;
  Footprint footprint;
  std::string lane_id;
  VehicleRole role = VehicleRole::kBackground;

  // Lane-relative bookkeeping used by the engine's own planner.
  double lane_s = 0.0;
  std::vector<std::string> next_lanes;  // committed lanes after lane_id
  std::string change_from;              // lane being left, empty otherwise
  double change_offset = 0.0;           // lateral offset at change start
  double change_elapsed = 0.0;
  double change_duration = 0.0;

  bool changing_lane() const { return !change_from.empty(); }
  /// Current lateral offset from the lane_id centerline.
  double lateral_offset() const;
  OrientedBox box() const {
    return {pose.position(), pose.yaw, footprint.length, footprint.width};
  }
  bool operator==(const VehicleState&) const = default;
};

struct IdmParams {
  double desired_speed = 12.0;
  double time_headway = 1.5;
  double min_gap = 2.0;
  double max_accel = 3.0;
  double comfort_decel = 2.0;
  bool operator==(const IdmParams&) const = default;
};

struct TrajectoryWeights {
  double efficiency = 1.0;
  double comfort = 0.5;
  double safety = 1.0;
  bool operator==(const TrajectoryWeights&) const = default;
};

struct TrafficConfig {
  double cooperation_factor = 0.5;
  TrajectoryWeights trajectory_weights;
  double spawn_density = 6.0;  // vehicles per lane-km
  std::uint64_t seed = 0;
  IdmParams idm;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  bool operator==(const TrafficConfig&) const = default;
};

struct TrajectorySample {
  double t = 0.0;
  Pose2 pose;
  double speed = 0.0;
  double accel = 0.0;
};
using Trajectory = std::vector<TrajectorySample>;

/// Six ego-frame waypoints at t = 0.5, 1.0, ..., 3.0 s after `issued_at`.
struct AgentPlan {
  std::array<Pose2, 6> waypoints{};
  double issued_at = 0.0;

  /// Throws ValidationError on non-finite values.
  void validate() const;
  bool operator==(const AgentPlan&) const = default;
};

/// Interpolated agent plan installed on the ego, in the map frame.
struct EgoPlan {
  double issued_at = 0.0;
  std::vector<Pose2> samples;  // kTrajectorySamples poses at 10 Hz
  bool operator==(const EgoPlan&) const = default;
};

struct CollisionEvent {
  double time = 0.0;
  std::array<std::string, 2> ids;  // sorted
  double penetration = 0.0;
  bool operator==(const CollisionEvent&) const = default;
};

struct ManeuverDecision {
  Maneuver maneuver = Maneuver::kKeepLane;
  double target_speed = 0.0;
  std::string target_lane;
  double utility = 0.0;
  bool operator==(const ManeuverDecision&) const = default;
};
using ManeuverSet = std::map<std::string, ManeuverDecision>;

struct WorldState {
  std::int64_t tick = 0;  // completed physics steps
  double sim_time = 0.0;  // tick * kStepDt
  std::map<std::string, VehicleState> vehicles;
  EgoMode ego_mode = EgoMode::kOpenLoop;
  std::optional<EgoPlan> active_ego_plan;
  std::optional<AgentPlan> recorded_plan;  // last agent plan (open loop)
  ManeuverSet maneuvers;                   // last 2 Hz decision
  std::vector<CollisionEvent> collisions;  // detected after the last step
  std::vector<std::string> despawned;      // removed during the last step
  std::vector<std::string> degraded;       // emergency-brake plans, last step

  const VehicleState& ego() const;
  VehicleState& ego();
  bool operator==(const WorldState&) const = default;
};

/// Where and how the ego starts. `route_lanes` become its committed path.
struct EgoSpawn {
  std::string lane_id;
  double s = 0.0;
  double speed = 0.0;
  std::vector<std::string> route_lanes;
};

// ---------------------------------------------------------------------------
// Longitudinal model

/// Intelligent Driver Model acceleration. `gap` is bumper to bumper;
/// `closing_speed` is own speed minus leader speed. Pass an infinite gap for
/// free road. Not clamped.
double idm_accel(const IdmParams& p, double speed, double desired_speed,
                 double gap, double closing_speed);

// ---------------------------------------------------------------------------
// Operations

/// Places the ego and background vehicles. Per non-connector lane (in id
/// order) n = round(density * length_km) vehicles sit at evenly spaced
/// slots with seeded jitter that keeps center spacing >= min_gap + length.
/// Slots within that spacing of the ego are dropped. Throws SaturationError
/// when some lane cannot hold its n vehicles.
WorldState spawn_background_traffic(const RoadGraph& graph,
                                    const TrafficConfig& config,
                                    const EgoSpawn& ego);

/// Per-vehicle options scored for the joint decision (exposed for tests).
struct ManeuverOption {
  Maneuver maneuver = Maneuver::kKeepLane;
  std::string target_lane;
  double own_gain = 0.0;       // m/s^2, minus the change threshold
  double neighbor_gain = 0.0;  // summed gain of affected followers
  std::string gap_key;         // empty for keep-lane

  double utility(double cooperation) const {
    return own_gain + cooperation * neighbor_gain;
  }
};
std::map<std::string, std::vector<ManeuverOption>> maneuver_options(
    const WorldState& world, const RoadGraph& graph,
    const TrafficConfig& config);

/// Exhaustive conflict-free joint choice maximizing the utility sum. Ties
/// prefer lane changes for the lowest vehicle id first.
std::map<std::string, std::size_t> solve_joint_maneuvers(
    const std::map<std::string, std::vector<ManeuverOption>>& options,
    const std::vector<std::string>& group, double cooperation);

ManeuverSet decide_maneuvers(const WorldState& world, const RoadGraph& graph,
                             const TrafficConfig& config);

struct PlannedTrajectory {
  Trajectory samples;
  Maneuver maneuver = Maneuver::kKeepLane;
  double duration = 0.0;  // lateral duration of a lane change
  double score = 0.0;
  bool degraded = false;
};

/// 10 Hz plans for every background vehicle, plus the ego when the engine
/// drives it (open loop).
std::map<std::string, PlannedTrajectory> plan_trajectories(
    const WorldState& world, const ManeuverSet& maneuvers,
    const RoadGraph& graph, const TrafficConfig& config);

/// The engine's own keep-lane plan for the ego along its committed lanes.
PlannedTrajectory engine_ego_plan(const WorldState& world,
                                  const RoadGraph& graph,
                                  const TrafficConfig& config);

/// Advances the world by exactly kStepDt. Throws ContractError for any other
/// dt, or in closed loop without an active ego plan.
WorldState step(const WorldState& world, double dt, const RoadGraph& graph,
                const TrafficConfig& config);

std::vector<CollisionEvent> detect_collisions(const WorldState& world);

/// 31 samples over [0, 3] s in the plan frame. Knots are copied exactly,
/// positions between knots are linear, yaw follows the segment direction.
std::vector<Pose2> interpolate_agent_plan(const AgentPlan& plan,
                                          const Pose2& current_pose);

/// Sets the ego mode. Changing the mode after the first step is rejected.
/// With a plan: closed loop installs it as the active ego plan, open loop
/// only records it.
WorldState set_ego_mode(const WorldState& world, EgoMode mode,
                        const std::optional<AgentPlan>& plan = std::nullopt);

// ---------------------------------------------------------------------------
// Helpers shared with the reference agent

/// Distance along a lane chain (starting at `start_s` on lanes[0]) to the
/// point `s` on `lane`, if the lane is on the chain.
std::optional<double> distance_along(const RoadGraph& graph,
                                     const std::vector<std::string>& lanes,
                                     double start_s, const std::string& lane,
                                     double s);

struct LeaderInfo {
  std::string id;
  double gap = 0.0;  // bumper to bumper along the chain
  double speed = 0.0;
};

/// Nearest vehicle ahead along the chain, and the nearest yield point at a
/// junction conflict (reported as a stopped leader with id "yield:<lane>").
std::optional<LeaderInfo> find_leader(const WorldState& world,
                                      const RoadGraph& graph,
                                      const std::string& self_id,
                                      const std::vector<std::string>& lanes,
                                      double start_s, double lookahead);

}  // namespace arena
