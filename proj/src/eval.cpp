#include "arena/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arena/errors.hpp"
#include "json_util.hpp"

namespace arena {

using detail::json;

namespace {

constexpr double kKnotSpacing = 0.5;
constexpr double kSampleDt = kStepDt;
// Touching footprints count as a time-to-collision violation.
constexpr double kTouchTolerance = 1e-9;
constexpr double kProgressBack = 5.0;
constexpr double kProgressAhead = 80.0;
constexpr double kTrackWindow = 30.0;
constexpr double kTrackMaxOffset = 10.0;

bool nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

Pose2 forecast(const VehicleState& v, double t) {
  const Vec2 p = v.pose.position() + heading_vector(v.pose.yaw) * (v.speed * t);
  return {p.x, p.y, v.pose.yaw};
}

OrientedBox box_at(const Pose2& p, const Footprint& f) {
  return {p.position(), p.yaw, f.length, f.width};
}

double bounding_radius(const Footprint& f) {
  return 0.5 * std::hypot(f.length, f.width);
}

}  // namespace

void ScoreWeights::validate() const {
  if (!nonneg(ep) || !nonneg(ttc) || !nonneg(comfort)) {
    throw ValidationError("eval.weights", "weights must be finite and nonnegative");
  }
  if (ep + ttc + comfort <= 0.0) {
    throw ValidationError("eval.weights", "at least one weight must be positive");
  }
}

void ScoreThresholds::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(ttc)) throw ValidationError("eval.thresholds.ttc", "must be positive");
  if (!positive(max_lon_accel)) {
    throw ValidationError("eval.thresholds.max_lon_accel", "must be positive");
  }
  if (!positive(max_lat_accel)) {
    throw ValidationError("eval.thresholds.max_lat_accel", "must be positive");
  }
  if (!positive(max_jerk)) {
    throw ValidationError("eval.thresholds.max_jerk", "must be positive");
  }
}

// ---------------------------------------------------------------------------
// Frame scoring

double pdms_frame(int nc, int dac, double ep, int ttc, int comfort,
                  const ScoreWeights& w) {
  w.validate();
  auto binary = [](int v) { return v == 0 || v == 1; };
  if (!binary(nc) || !binary(dac) || !binary(ttc) || !binary(comfort)) {
    throw ValidationError("score", "binary sub-scores must be 0 or 1");
  }
  if (!(ep >= 0.0 && ep <= 1.0)) throw ValidationError("score.ep", "must lie in [0, 1]");
  const double avg = (w.ep * ep + w.ttc * ttc + w.comfort * comfort) /
                     (w.ep + w.ttc + w.comfort);
  return nc * dac * avg;
}

double pdms_frame(const FrameScore& s, const ScoreWeights& weights) {
  return pdms_frame(s.nc, s.dac, s.ep, s.ttc, s.comfort, weights);
}

double pdms_aggregate(std::span<const double> frames) {
  if (frames.empty()) throw ValidationError("frames", "cannot average zero frames");
  return std::accumulate(frames.begin(), frames.end(), 0.0) /
         static_cast<double>(frames.size());
}

namespace {

int no_collision(std::span<const Pose2> plan, const ScoringContext& ctx) {
  const double r_ego = bounding_radius(ctx.ego_footprint);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double t = static_cast<double>(i) * kSampleDt;
    const OrientedBox ego = box_at(plan[i], ctx.ego_footprint);
    for (const auto& other : ctx.background) {
      const Pose2 p = forecast(other, t);
      if ((p.position() - ego.center).norm() >
          r_ego + bounding_radius(other.footprint)) {
        continue;
      }
      if (sat_separation(ego, box_at(p, other.footprint)) < 0.0) return 0;
    }
  }
  return 1;
}

int drivable_compliance(std::span<const Pose2> plan, const ScoringContext& ctx) {
  if (!ctx.graph) return 1;
  for (const auto& pose : plan) {
    for (const auto& c : box_at(pose, ctx.ego_footprint).corners()) {
      if (!ctx.graph->in_drivable_area(c)) return 0;
    }
  }
  return 1;
}

int ttc_ok(std::span<const Pose2> plan, const ScoringContext& ctx,
           double threshold) {
  const int horizon_steps = static_cast<int>(std::lround(threshold / kSampleDt));
  const double r_ego = bounding_radius(ctx.ego_footprint);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double t = static_cast<double>(i) * kSampleDt;
    // Ego velocity from the plan itself, held constant from sample i.
    const std::size_t a = i + 1 < plan.size() ? i : i - 1;
    const Vec2 vel = (plan[a + 1].position() - plan[a].position()) * (1.0 / kSampleDt);
    for (const auto& other : ctx.background) {
      const Pose2 now = forecast(other, t);
      // Only vehicles ahead of the ego can produce a violation.
      if (to_local(plan[i], now.position()).x <= 0.0) continue;
      const double reach = (vel.norm() + other.speed) * threshold + r_ego +
                           bounding_radius(other.footprint);
      if ((now.position() - plan[i].position()).norm() > reach) continue;
      for (int k = 0; k <= horizon_steps; ++k) {
        const double dt = k * kSampleDt;
        const Vec2 ep = plan[i].position() + vel * dt;
        const OrientedBox ego{ep, plan[i].yaw, ctx.ego_footprint.length,
                              ctx.ego_footprint.width};
        const OrientedBox obox = box_at(forecast(other, t + dt), other.footprint);
        if (sat_separation(ego, obox) <= kTouchTolerance) return 0;
      }
    }
  }
  return 1;
}

int comfortable(std::span<const Pose2> plan, const ScoreThresholds& th) {
  const std::size_t stride = static_cast<std::size_t>(
      std::lround(kKnotSpacing / kSampleDt));
  std::vector<Vec2> knots;
  for (std::size_t i = 0; i < plan.size(); i += stride) {
    knots.push_back(plan[i].position());
  }
  if (knots.size() < 3) return 1;
  std::vector<double> speed, heading;
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const Vec2 d = knots[j + 1] - knots[j];
    speed.push_back(d.norm() / kKnotSpacing);
    heading.push_back(std::atan2(d.y, d.x));
  }
  std::vector<double> lon;
  for (std::size_t j = 0; j + 1 < speed.size(); ++j) {
    const double a = (speed[j + 1] - speed[j]) / kKnotSpacing;
    lon.push_back(a);
    if (std::abs(a) > th.max_lon_accel) return 0;
    // Heading is meaningless while (nearly) standing still.
    if (std::min(speed[j], speed[j + 1]) * kKnotSpacing > 0.05) {
      const double yaw_rate = wrap_angle(heading[j + 1] - heading[j]) / kKnotSpacing;
      const double lat = 0.5 * (speed[j] + speed[j + 1]) * yaw_rate;
      if (std::abs(lat) > th.max_lat_accel) return 0;
    }
  }
  for (std::size_t j = 0; j + 1 < lon.size(); ++j) {
    if (std::abs((lon[j + 1] - lon[j]) / kKnotSpacing) > th.max_jerk) return 0;
  }
  return 1;
}

double plan_progress(const Route& route, std::span<const Pose2> plan,
                     double route_s) {
  if (plan.empty()) return 0.0;
  const double s0 =
      route.project(plan.front().position(), route_s - kProgressBack,
                    route_s + kProgressBack).s;
  const double s1 = route.project(plan.back().position(), route_s - kProgressBack,
                                  route_s + kProgressAhead).s;
  return s1 - s0;
}

}  // namespace

FrameScore compute_frame_subscores(std::span<const Pose2> plan,
                                   const ScoringContext& context,
                                   const EvalConfig& config,
                                   std::int64_t frame_index) {
  config.validate();
  if (plan.size() != kTrajectorySamples) {
    throw ContractError("scored plans must have 31 samples");
  }
  FrameScore s;
  s.t = frame_index;
  s.nc = no_collision(plan, context);
  s.dac = drivable_compliance(plan, context);
  s.ttc = ttc_ok(plan, context, config.thresholds.ttc);
  s.comfort = comfortable(plan, config.thresholds);
  s.ep = 1.0;
  if (context.route) {
    const double mine = plan_progress(*context.route, plan, context.route_s);
    const double ref =
        plan_progress(*context.route, context.reference_plan, context.route_s);
    if (ref < 0.1) {
      s.ep = mine >= -1e-9 ? 1.0 : 0.0;
    } else {
      s.ep = std::clamp(mine / ref, 0.0, 1.0);
    }
  }
  s.pdms_t = pdms_frame(s, config.weights);
  return s;
}

// ---------------------------------------------------------------------------
// Episode metrics

double advance_route_progress(const Route& route, double progress,
                              const Vec2& position) {
  const Projection p =
      route.project(position, progress - kProgressBack, progress + kTrackWindow);
  if (p.distance > kTrackMaxOffset) return progress;
  return std::max(progress, p.s);
}

double route_completion(const Route& route, std::span<const Vec2> realized) {
  if (!(route.total_length > 0.0)) {
    throw ValidationError("route", "total length must be positive");
  }
  double progress = 0.0;
  for (const auto& p : realized) progress = advance_route_progress(route, progress, p);
  return std::clamp(progress / route.total_length, 0.0, 1.0);
}

double ads(double r_c, double pdms) {
  if (!(r_c >= 0.0 && r_c <= 1.0)) throw ValidationError("r_c", "must lie in [0, 1]");
  if (!(pdms >= 0.0 && pdms <= 1.0)) throw ValidationError("pdms", "must lie in [0, 1]");
  return r_c * pdms;
}

namespace {

constexpr std::array<std::pair<TerminationKind, std::string_view>, 6> kKinds{{
    {TerminationKind::kRouteComplete, "ROUTE_COMPLETE"},
    {TerminationKind::kCollision, "COLLISION"},
    {TerminationKind::kOffRoad, "OFF_ROAD"},
    {TerminationKind::kAgentTimeout, "AGENT_TIMEOUT"},
    {TerminationKind::kRendererFailure, "RENDERER_FAILURE"},
    {TerminationKind::kTimeLimit, "TIME_LIMIT"},
}};

}  // namespace

std::string_view to_string(TerminationKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "TIME_LIMIT";
}

TerminationKind termination_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  throw ValidationError("termination.kind", "unknown '" + std::string(name) + "'");
}

int exit_code(TerminationKind kind) {
  switch (kind) {
    case TerminationKind::kRouteComplete: return 0;
    case TerminationKind::kCollision: return 10;
    case TerminationKind::kOffRoad: return 11;
    case TerminationKind::kAgentTimeout: return 12;
    case TerminationKind::kRendererFailure: return 13;
    case TerminationKind::kTimeLimit: return 14;
  }
  return 1;
}

void finalize_report(EvalReport& report) {
  std::vector<double> values;
  values.reserve(report.frame_scores.size());
  for (const auto& f : report.frame_scores) values.push_back(f.pdms_t);
  report.pdms = values.empty() ? 0.0 : pdms_aggregate(values);
  report.ads = ads(report.route_completion, report.pdms);
}

std::string report_json(const EvalReport& r) {
  json frames = json::array();
  for (const auto& f : r.frame_scores) {
    frames.push_back({{"t", f.t},
                      {"nc", f.nc},
                      {"dac", f.dac},
                      {"ep", f.ep},
                      {"ttc", f.ttc},
                      {"comfort", f.comfort},
                      {"pdms_t", f.pdms_t}});
  }
  json j{{"config", detail::eval_config_json(r.config)},
         {"frame_scores", std::move(frames)},
         {"pdms", r.pdms},
         {"route_completion", r.route_completion},
         {"ads", r.ads},
         {"termination",
          {{"kind", std::string(to_string(r.termination.kind))},
           {"detail", r.termination.detail},
           {"time", r.termination.time}}},
         {"rescored", r.rescored}};
  return j.dump(2);
}

EvalReport parse_report_json(std::string_view text) {
  return detail::protocol_guard("eval report", [&] {
    const json j = detail::parse_json(text, "eval report");
    EvalReport r;
    r.config = detail::eval_config_from(j.at("config"));
    for (const auto& f : j.at("frame_scores")) {
      r.frame_scores.push_back({f.at("t").get<std::int64_t>(), f.at("nc").get<int>(),
                                f.at("dac").get<int>(), f.at("ep").get<double>(),
                                f.at("ttc").get<int>(), f.at("comfort").get<int>(),
                                f.at("pdms_t").get<double>()});
    }
    r.pdms = j.at("pdms").get<double>();
    r.route_completion = j.at("route_completion").get<double>();
    r.ads = j.at("ads").get<double>();
    const auto& t = j.at("termination");
    r.termination = {termination_kind_from_string(t.at("kind").get<std::string>()),
                     t.at("detail").get<std::string>(), t.at("time").get<double>()};
    r.rescored = j.at("rescored").get<bool>();
    return r;
  });
}

}  // namespace arena
