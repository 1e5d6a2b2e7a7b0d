#include <doctest.h>

#include <cmath>

#include "arena/errors.hpp"
#include "arena/eval.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace arena;

namespace {

constexpr double kDt = 0.1;

/// Straight 10 Hz plan from x0 along +x at speed v.
std::vector<Pose2> straight_plan(double x0, double v) {
  std::vector<Pose2> plan;
  for (std::size_t i = 0; i < kTrajectorySamples; ++i) {
    plan.push_back({x0 + v * kDt * static_cast<double>(i), 0.0, 0.0});
  }
  return plan;
}

struct Road {
  RoadGraph graph = scenes::single_lane(1000.0, 2);
  Route route = plan_route(graph, {0.0, 0.0}, {900.0, 0.0});
};

ScoringContext context_for(const Road& road, std::vector<Pose2> reference) {
  ScoringContext ctx;
  ctx.graph = &road.graph;
  ctx.route = &road.route;
  ctx.reference_plan = std::move(reference);
  ctx.route_s = road.route.project(ctx.reference_plan.front().position()).s;
  return ctx;
}

// Dense 100 Hz reference for the collision and time-to-collision checks. A
// verdict counts as clear-cut only if it survives shrinking and growing
// every footprint by 0.3 m; near-touching cases are left out.
struct DenseVerdict {
  bool collides = false;
  bool ttc_violated = false;
  bool ambiguous = false;
};

oracle::Rect footprint_at(double x, double y, double yaw, double grow) {
  return {x, y, yaw, Footprint{}.length + 2 * grow, Footprint{}.width + 2 * grow};
}

bool rects_overlap(const oracle::Rect& a, const oracle::Rect& b) {
  const double ra = 0.5 * std::hypot(a.length, a.width);
  const double rb = 0.5 * std::hypot(b.length, b.width);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb) return false;
  return oracle::sampled_overlap(a, b, 12);
}

struct Mover {
  double x, y, yaw, speed;
  oracle::P at(double t) const {
    return {x + speed * std::cos(yaw) * t, y + speed * std::sin(yaw) * t};
  }
};

DenseVerdict dense_oracle(double ego_speed, const std::vector<Mover>& others, double t_ttc) {
  DenseVerdict out;
  auto verdict = [&](auto&& overlaps_with_grow) {
    const bool hit = overlaps_with_grow(0.0);
    if (hit != overlaps_with_grow(-0.3) || hit != overlaps_with_grow(0.3)) out.ambiguous = true;
    return hit;
  };
  out.collides = verdict([&](double g) {
    for (int k = 0; k <= 300; ++k) {
      const double t = 0.01 * k;
      const auto ego = footprint_at(ego_speed * t, 0.0, 0.0, g);
      for (const auto& o : others) {
        const auto p = o.at(t);
        if (rects_overlap(ego, footprint_at(p.x, p.y, o.yaw, g))) return true;
      }
    }
    return false;
  });
  out.ttc_violated = verdict([&](double g) {
    for (int i = 0; i < static_cast<int>(kTrajectorySamples); ++i) {
      const double t = kDt * i;
      const double ex = ego_speed * t;
      for (const auto& o : others) {
        if (o.at(t).x - ex <= 0.0) continue;  // only traffic ahead counts
        for (int k = 0; k <= static_cast<int>(std::lround(t_ttc / 0.01)); ++k) {
          const double dt = 0.01 * k;
          const auto p = o.at(t + dt);
          if (rects_overlap(footprint_at(ex + ego_speed * dt, 0.0, 0.0, g),
                            footprint_at(p.x, p.y, o.yaw, g))) {
            return true;
          }
        }
      }
    }
    return false;
  });
  // The ahead rule is a sharp cut too.
  for (int i = 0; i < static_cast<int>(kTrajectorySamples); ++i) {
    for (const auto& o : others) {
      if (std::abs(o.at(kDt * i).x - ego_speed * kDt * i) < 0.05) out.ambiguous = true;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pdms_frame arithmetic") {
  const ScoreWeights w;
  CHECK(pdms_frame(1, 1, 1.0, 1, 1, w) == doctest::Approx(1.0));
  CHECK(pdms_frame(0, 1, 1.0, 1, 1, w) == 0.0);
  CHECK(pdms_frame(1, 1, 0.5, 1, 1, w) == doctest::Approx(9.5 / 12.0).epsilon(1e-12));
  CHECK_THROWS_AS(pdms_frame(1, 1, 1.0, 1, 1, ScoreWeights{0, 0, 0}), ValidationError);
}

TEST_CASE("pdms_frame is monotone and scale invariant") {
  oracle::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const ScoreWeights w{rng.uniform(0.1, 5), rng.uniform(0.1, 5), rng.uniform(0.1, 5)};
    const int nc = static_cast<int>(rng.next() % 2), dac = static_cast<int>(rng.next() % 2);
    const int ttc = static_cast<int>(rng.next() % 2), c = static_cast<int>(rng.next() % 2);
    const double ep = rng.uniform(0, 1);
    const double base = pdms_frame(nc, dac, ep, ttc, c, w);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    CHECK(pdms_frame(nc, dac, std::min(1.0, ep + 0.1), ttc, c, w) >= base);
    CHECK(pdms_frame(nc, dac, ep, 1, c, w) >= base);
    CHECK(pdms_frame(nc, dac, ep, ttc, 1, w) >= base);
    const ScoreWeights scaled{3 * w.ep, 3 * w.ttc, 3 * w.comfort};
    CHECK(std::abs(pdms_frame(nc, dac, ep, ttc, c, scaled) - base) <= 1e-12);
  }
}

TEST_CASE("pdms aggregate") {
  CHECK(pdms_aggregate(std::vector<double>{1, 1, 1}) == doctest::Approx(1.0));
  CHECK(pdms_aggregate(std::vector<double>{0.5, 1.0}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(pdms_aggregate(std::vector<double>{}), ValidationError);
}

TEST_CASE("ads") {
  CHECK(std::abs(ads(0.1684, 0.7615) - 0.1282) <= 5e-5);
  CHECK(std::abs(ads(0.091, 0.4952) - 0.0451) <= 1e-4);
  CHECK(ads(0.0, 0.37) == 0.0);
  CHECK_THROWS_AS(ads(1.2, 0.5), ValidationError);
  CHECK_THROWS_AS(ads(0.5, -0.1), ValidationError);
}

TEST_CASE("route completion") {
  const RoadGraph g = scenes::single_lane(100.0);
  const Route r = plan_route(g, {0.0, 0.0}, {100.0, 0.0});
  REQUIRE(r.total_length == doctest::Approx(100.0));
  Polyline partial;
  for (double x = 0.0; x <= 16.84 + 1e-9; x += 0.5) partial.push_back({x, 0.3});
  partial.push_back({16.84, 0.3});
  CHECK(route_completion(r, partial) == doctest::Approx(0.1684).epsilon(1e-9));
  Polyline beyond;
  for (double x = 0.0; x <= 130.0; x += 1.0) beyond.push_back({x, 0.0});
  CHECK(route_completion(r, beyond) == doctest::Approx(1.0));
  Polyline back_and_forth;
  for (double x = 0.0; x <= 40.0; x += 1.0) back_and_forth.push_back({x, 0.0});
  for (double x = 39.0; x >= 10.0; x -= 1.0) back_and_forth.push_back({x, 0.0});
  CHECK(route_completion(r, back_and_forth) == doctest::Approx(0.4));
}

TEST_CASE("frame sub-scores on an empty road") {
  const Road road;
  const auto plan = straight_plan(10.0, 8.0);
  const FrameScore s = compute_frame_subscores(plan, context_for(road, plan), EvalConfig{});
  CHECK(s.nc == 1);
  CHECK(s.dac == 1);
  CHECK(s.ep == doctest::Approx(1.0));
  CHECK(s.ttc == 1);
  CHECK(s.comfort == 1);
  CHECK(pdms_frame(s, ScoreWeights{}) == doctest::Approx(1.0));
}

TEST_CASE("frame sub-scores penalties") {
  const Road road;
  const auto plan = straight_plan(10.0, 8.0);
  SUBCASE("collision") {
    ScoringContext ctx = context_for(road, plan);
    ctx.background.push_back(scenes::vehicle("bg", plan[12].x, 0.0, 0.0, 0.0));
    CHECK(compute_frame_subscores(plan, ctx, EvalConfig{}).nc == 0);
  }
  SUBCASE("head-on closer at the TTC boundary") {
    const auto slow = straight_plan(10.0, 5.0);
    ScoringContext ctx = context_for(road, slow);
    const double gap = 10.0;
    ctx.background.push_back(
        scenes::vehicle("bg", 10.0 + Footprint{}.length + gap, 0.0, std::numbers::pi, 5.0));
    CHECK(compute_frame_subscores(slow, ctx, EvalConfig{}).ttc == 0);
  }
  SUBCASE("leaving the road") {
    auto off = plan;
    for (std::size_t i = 0; i < off.size(); ++i) off[i].y = 0.5 * static_cast<double>(i);
    CHECK(compute_frame_subscores(off, context_for(road, plan), EvalConfig{}).dac == 0);
  }
  SUBCASE("half the reference progress") {
    const auto half = straight_plan(10.0, 4.0);
    CHECK(compute_frame_subscores(half, context_for(road, plan), EvalConfig{}).ep ==
          doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("harsh braking is uncomfortable") {
    std::vector<Pose2> harsh;
    double x = 10.0, v = 12.0;
    for (std::size_t i = 0; i < kTrajectorySamples; ++i) {
      harsh.push_back({x, 0.0, 0.0});
      v = std::max(0.0, v - 6.0 * kDt);
      x += v * kDt;
    }
    CHECK(compute_frame_subscores(harsh, context_for(road, plan), EvalConfig{}).comfort == 0);
  }
  SUBCASE("wrong sample count") {
    const std::vector<Pose2> short_plan(plan.begin(), plan.begin() + 10);
    CHECK_THROWS_AS(compute_frame_subscores(short_plan, context_for(road, plan), EvalConfig{}),
                    ContractError);
  }
}

TEST_CASE("collision and TTC agree with a dense 100 Hz oracle") {
  const Road road;
  oracle::Rng rng(99);
  int compared = 0, collisions = 0, violations = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const double ego_speed = rng.uniform(0, 10);
    std::vector<Mover> movers;
    const int n = 1 + static_cast<int>(rng.next() % 3);
    for (int k = 0; k < n; ++k) {
      const bool oncoming = rng.next() % 2 == 0;
      movers.push_back({rng.uniform(-5, 45), rng.uniform(-3.5, 3.5),
                        (oncoming ? std::numbers::pi : 0.0) + rng.uniform(-0.2, 0.2),
                        rng.uniform(0, 10)});
    }
    const DenseVerdict truth = dense_oracle(ego_speed, movers, EvalConfig{}.thresholds.ttc);
    if (truth.ambiguous) continue;
    ++compared;
    const auto plan = straight_plan(0.0, ego_speed);
    ScoringContext ctx = context_for(road, plan);
    for (std::size_t k = 0; k < movers.size(); ++k) {
      const auto& m = movers[k];
      ctx.background.push_back(
          scenes::vehicle("bg-" + std::to_string(k), m.x, m.y, m.yaw, m.speed));
    }
    const FrameScore s = compute_frame_subscores(plan, ctx, EvalConfig{});
    CAPTURE(trial);
    CHECK((s.nc == 0) == truth.collides);
    CHECK((s.ttc == 0) == truth.ttc_violated);
    collisions += truth.collides;
    violations += truth.ttc_violated;
  }
  CHECK(compared >= 75);
  CHECK(collisions > 5);
  CHECK(violations > collisions);
}

TEST_CASE("exit codes are distinct") {
  CHECK(exit_code(TerminationKind::kRouteComplete) == 0);
  CHECK(exit_code(TerminationKind::kCollision) == 10);
  CHECK(exit_code(TerminationKind::kOffRoad) == 11);
  CHECK(exit_code(TerminationKind::kAgentTimeout) == 12);
  CHECK(exit_code(TerminationKind::kRendererFailure) == 13);
  CHECK(exit_code(TerminationKind::kTimeLimit) == 14);
}

TEST_CASE("report round trip") {
  EvalReport r;
  r.frame_scores.push_back({0, 1, 1, 0.75, 1, 0, 0.0});
  r.frame_scores.push_back({1, 1, 1, 1.0, 1, 1, 0.0});
  for (auto& f : r.frame_scores) f.pdms_t = pdms_frame(f, r.config.weights);
  r.route_completion = 0.4;
  r.termination = {TerminationKind::kOffRoad, "ego left the road", 12.5};
  finalize_report(r);
  CHECK(r.pdms == doctest::Approx(0.5 * (r.frame_scores[0].pdms_t + 1.0)));
  CHECK(r.ads == doctest::Approx(0.4 * r.pdms));
  CHECK(parse_report_json(report_json(r)) == r);
}
