#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arena/geometry.hpp"
#include "arena/roadnet.hpp"
#include "arena/traffic.hpp"

namespace arena {

struct ScoreWeights {
  double ep = 5.0;
  double ttc = 5.0;
  double comfort = 2.0;

  /// Nonnegative and finite with a positive sum.
  void validate() const;
  bool operator==(const ScoreWeights&) const = default;
};

struct ScoreThresholds {
  double ttc = 1.0;              // s
  double max_lon_accel = 2.4;    // m/s^2
  double max_lat_accel = 4.9;    // m/s^2
  double max_jerk = 8.0;         // m/s^3
  void validate() const;
  bool operator==(const ScoreThresholds&) const = default;
};

struct EvalConfig {
  ScoreWeights weights;
  ScoreThresholds thresholds;
  void validate() const {
    weights.validate();
    thresholds.validate();
  }
  bool operator==(const EvalConfig&) const = default;
};

struct FrameScore {
  std::int64_t t = 0;  // control frame index
  int nc = 1;
  int dac = 1;
  double ep = 1.0;
  int ttc = 1;
  int comfort = 1;
  double pdms_t = 1.0;
  bool operator==(const FrameScore&) const = default;
};

/// What a plan is scored against. Background vehicles are forecast at
/// constant velocity from their current states.
struct ScoringContext {
  std::vector<VehicleState> background;
  const RoadGraph* graph = nullptr;
  const Route* route = nullptr;
  Footprint ego_footprint;
  /// The engine planner's ego trajectory over the same horizon, 10 Hz.
  std::vector<Pose2> reference_plan;
  /// Progress of the ego along the route when the plan was issued; bounds
  /// the projection window.
  double route_s = 0.0;
};

/// Scores one 31-sample 10 Hz plan (map frame, sample 0 at the current ego
/// pose). Collision and time-to-collision checks run at every sample;
/// comfort is judged on the 0.5 s knots.
FrameScore compute_frame_subscores(std::span<const Pose2> plan,
                                   const ScoringContext& context,
                                   const EvalConfig& config,
                                   std::int64_t frame_index = 0);

/// nc * dac * weighted average of (ep, ttc, comfort).
double pdms_frame(int nc, int dac, double ep, int ttc, int comfort,
                  const ScoreWeights& weights);
double pdms_frame(const FrameScore& s, const ScoreWeights& weights);
/// Arithmetic mean; throws ValidationError when empty.
double pdms_aggregate(std::span<const double> frames);

/// Furthest progress reached by walking the realized path forward along
/// the route, as a fraction of its length, clipped to [0, 1].
double route_completion(const Route& route, std::span<const Vec2> realized);
/// Monotone progress tracker shared with the orchestrator.
double advance_route_progress(const Route& route, double progress,
                              const Vec2& position);

/// r_c * pdms; both must lie in [0, 1].
double ads(double r_c, double pdms);

enum class TerminationKind : std::uint8_t {
  kRouteComplete,
  kCollision,
  kOffRoad,
  kAgentTimeout,
  kRendererFailure,
  kTimeLimit,
};
std::string_view to_string(TerminationKind kind);
TerminationKind termination_kind_from_string(std::string_view name);
/// 0 for a completed route, distinct nonzero codes otherwise.
int exit_code(TerminationKind kind);

struct Termination {
  TerminationKind kind = TerminationKind::kTimeLimit;
  std::string detail;
  double time = 0.0;
  bool operator==(const Termination&) const = default;
};

struct EvalReport {
  EvalConfig config;
  std::vector<FrameScore> frame_scores;
  double pdms = 0.0;
  double route_completion = 0.0;
  double ads = 0.0;
  Termination termination;
  bool rescored = false;  // recomputed with a different EvalConfig
  bool operator==(const EvalReport&) const = default;
};

/// Fills pdms and ads from the frame scores and route completion. An
/// episode without scored frames gets pdms 0.
void finalize_report(EvalReport& report);

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(std::string_view text);

}  // namespace arena
