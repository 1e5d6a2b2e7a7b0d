#include <doctest.h>

#include <cmath>
#include <limits>

#include "arena/errors.hpp"
#include "arena/traffic.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace arena;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

EgoSpawn stub_spawn(const RoadGraph& g, double speed = 0.0) {
  const std::string stub = scenes::lane_of_way(g, 11);
  return {stub, 5.0, speed, {stub}};
}

AgentPlan straight_plan(double step) {
  AgentPlan plan;
  for (int k = 0; k < 6; ++k) plan.waypoints[k] = {step * (k + 1), 0.0, 0.0};
  return plan;
}

}  // namespace

TEST_CASE("zero density spawns only the ego") {
  const RoadGraph g = scenes::lane_with_stub();
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  const WorldState w = spawn_background_traffic(g, cfg, stub_spawn(g));
  REQUIRE(w.vehicles.size() == 1);
  CHECK(w.ego().role == VehicleRole::kEgo);
  CHECK(w.ego().id == kEgoId);
}

TEST_CASE("density 10 on a 1 km lane spawns 10 vehicles with safe spacing") {
  const RoadGraph g = scenes::lane_with_stub();
  TrafficConfig cfg;
  cfg.spawn_density = 10.0;
  const WorldState w = spawn_background_traffic(g, cfg, stub_spawn(g));
  const std::string main_lane = scenes::lane_of_way(g, 10);
  std::vector<double> s;
  for (const auto& [id, v] : w.vehicles) {
    if (v.role == VehicleRole::kBackground && v.lane_id == main_lane) s.push_back(v.lane_s);
  }
  REQUIRE(s.size() == 10);
  std::sort(s.begin(), s.end());
  for (std::size_t i = 1; i < s.size(); ++i) {
    CHECK(s[i] - s[i - 1] >= cfg.idm.min_gap + Footprint{}.length - 1e-9);
  }
}

TEST_CASE("spawning is deterministic in the seed") {
  const RoadGraph g = scenes::lane_with_stub();
  TrafficConfig cfg;
  cfg.spawn_density = 10.0;
  cfg.seed = 3;
  const WorldState a = spawn_background_traffic(g, cfg, stub_spawn(g));
  const WorldState b = spawn_background_traffic(g, cfg, stub_spawn(g));
  CHECK(a == b);
  cfg.seed = 4;
  const WorldState c = spawn_background_traffic(g, cfg, stub_spawn(g));
  CHECK_FALSE(a == c);
}

TEST_CASE("overfull lanes raise a saturation error") {
  const RoadGraph g = scenes::lane_with_stub();
  TrafficConfig cfg;
  cfg.spawn_density = 1000.0;
  CHECK_THROWS_AS(spawn_background_traffic(g, cfg, stub_spawn(g)), SaturationError);
}

TEST_CASE("IDM agrees with the closed-form oracle") {
  const IdmParams p;
  CHECK(idm_accel(p, 0.0, 12.0, kInf, 0.0) == doctest::Approx(p.max_accel));
  oracle::Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(0, 20), gap = rng.uniform(1, 80), dv = rng.uniform(-5, 5);
    const double expected = oracle::idm(v, 12.0, p.max_accel, p.comfort_decel, p.min_gap,
                                        p.time_headway, gap, dv);
    CHECK(idm_accel(p, v, 12.0, gap, dv) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("free road: first step accelerates at the IDM rate") {
  const RoadGraph g = scenes::lane_with_stub();
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  WorldState w = spawn_background_traffic(g, cfg, stub_spawn(g));
  // Background vehicle alone on the long lane, starting from rest.
  VehicleState bg = scenes::vehicle("bg-0000", 100.0, 0.0, 0.0, 0.0);
  bg.lane_id = scenes::lane_of_way(g, 10);
  bg.lane_s = 100.0;
  w.vehicles[bg.id] = bg;
  w = set_ego_mode(w, EgoMode::kClosedLoop, AgentPlan{});
  const WorldState next = step(w, kStepDt, g, cfg);
  const VehicleState& v = next.vehicles.at("bg-0000");
  const double a = oracle::idm(0.0, cfg.idm.desired_speed, cfg.idm.max_accel,
                               cfg.idm.comfort_decel, cfg.idm.min_gap,
                               cfg.idm.time_headway, kInf, 0.0);
  CHECK(v.accel == doctest::Approx(a));
  CHECK(v.speed == doctest::Approx(a * kStepDt));
}

TEST_CASE("a follower stops behind a stationary leader with at least the minimum gap") {
  const RoadGraph g = scenes::single_lane(1000.0);
  const std::string lane = g.lanes.begin()->first;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  WorldState w = spawn_background_traffic(g, cfg, {lane, 500.0, 0.0, {lane}});
  VehicleState bg = scenes::vehicle("bg-0000", 400.0, 0.0, 0.0, 10.0);
  bg.lane_id = lane;
  bg.lane_s = 400.0;
  w.vehicles[bg.id] = bg;
  AgentPlan hold;
  w = set_ego_mode(w, EgoMode::kClosedLoop, hold);
  double min_gap = kInf;
  for (int i = 0; i < 400; ++i) {
    w = step(w, kStepDt, g, cfg);
    if (i % kStepsPerControl == kStepsPerControl - 1) {
      hold.issued_at = w.sim_time;
      w = set_ego_mode(w, EgoMode::kClosedLoop, hold);
    }
    const double gap = w.ego().pose.x - w.vehicles.at("bg-0000").pose.x - Footprint{}.length;
    min_gap = std::min(min_gap, gap);
    CHECK(w.collisions.empty());
  }
  CHECK(min_gap >= cfg.idm.min_gap - 1e-6);
  CHECK(w.vehicles.at("bg-0000").speed == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("closed-loop ego follows its plan exactly") {
  const RoadGraph g = scenes::single_lane(1000.0);
  const std::string lane = g.lanes.begin()->first;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  SUBCASE("at rest it stays put") {
    WorldState w = spawn_background_traffic(g, cfg, {lane, 100.0, 0.0, {lane}});
    AgentPlan plan;
    for (auto& wp : plan.waypoints) wp = {0.0, 0.0, 0.0};
    w = set_ego_mode(w, EgoMode::kClosedLoop, plan);
    const WorldState next = step(w, kStepDt, g, cfg);
    CHECK(next.ego().pose.x == doctest::Approx(100.0));
    CHECK(next.ego().speed == doctest::Approx(0.0));
  }
  SUBCASE("at 10 m/s it moves 1.0 m") {
    WorldState w = spawn_background_traffic(g, cfg, {lane, 100.0, 10.0, {lane}});
    w = set_ego_mode(w, EgoMode::kClosedLoop, straight_plan(5.0));
    const WorldState next = step(w, kStepDt, g, cfg);
    CHECK(next.ego().pose.x == doctest::Approx(101.0).epsilon(1e-9));
    CHECK(next.ego().speed == doctest::Approx(10.0));
    CHECK(next.sim_time == doctest::Approx(0.1));
  }
}

TEST_CASE("step contract") {
  const RoadGraph g = scenes::single_lane(200.0);
  const std::string lane = g.lanes.begin()->first;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  WorldState w = spawn_background_traffic(g, cfg, {lane, 10.0, 0.0, {lane}});
  CHECK_THROWS_AS(step(w, 0.05, g, cfg), ContractError);
  WorldState closed = w;
  closed.ego_mode = EgoMode::kClosedLoop;
  CHECK_THROWS_AS(step(closed, kStepDt, g, cfg), ContractError);
  const WorldState moved = step(w, kStepDt, g, cfg);
  CHECK_THROWS_AS(set_ego_mode(moved, EgoMode::kClosedLoop, straight_plan(1.0)),
                  ContractError);
  CHECK_NOTHROW(set_ego_mode(moved, EgoMode::kOpenLoop, straight_plan(1.0)));
}

TEST_CASE("collision detection") {
  WorldState w;
  w.vehicles["b"] = scenes::vehicle("b", 0.0, 0.0, 0.0, 0.0);
  w.vehicles["a"] = scenes::vehicle("a", 3.0, 0.5, 0.2, 0.0);
  w.vehicles["c"] = scenes::vehicle("c", 40.0, 0.0, 0.0, 0.0);
  const auto events = detect_collisions(w);
  REQUIRE(events.size() == 1);
  CHECK(events[0].ids[0] == "a");
  CHECK(events[0].ids[1] == "b");
  CHECK(events[0].penetration > 0.0);
}

TEST_CASE("plan interpolation gives 31 samples with exact knots") {
  const AgentPlan plan = straight_plan(1.0);
  const auto samples = interpolate_agent_plan(plan, {0.0, 0.0, 0.0});
  REQUIRE(samples.size() == kTrajectorySamples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].x == doctest::Approx(0.2 * static_cast<double>(i)).epsilon(1e-12));
    CHECK(samples[i].y == 0.0);
  }
  for (std::size_t k = 0; k < 6; ++k) CHECK(samples[5 * (k + 1)] == plan.waypoints[k]);
  AgentPlan bad = plan;
  bad.waypoints[2].x = std::nan("");
  CHECK_THROWS_AS(interpolate_agent_plan(bad, {}), ValidationError);
}

TEST_CASE("joint maneuvers: ties favour the lowest id") {
  std::map<std::string, std::vector<ManeuverOption>> options;
  for (const char* id : {"b", "a"}) {
    ManeuverOption change{Maneuver::kChangeLeft, "L", 0.0, 0.0, "gap-1"};
    ManeuverOption keep{Maneuver::kKeepLane, "K", 0.0, 0.0, ""};
    options[id] = {change, keep};
  }
  const auto pick = solve_joint_maneuvers(options, {"a", "b"}, 0.5);
  CHECK(pick.at("a") == 0);
  CHECK(pick.at("b") == 1);
}

TEST_CASE("joint maneuvers: cooperation weighs the neighbours") {
  std::map<std::string, std::vector<ManeuverOption>> options;
  options["a"] = {{Maneuver::kChangeLeft, "L", 0.5, -1.0, "gap-1"},
                  {Maneuver::kKeepLane, "K", 0.0, 0.0, ""}};
  CHECK(solve_joint_maneuvers(options, {"a"}, 0.0).at("a") == 0);
  CHECK(solve_joint_maneuvers(options, {"a"}, 1.0).at("a") == 1);
}

TEST_CASE("config validation names the field") {
  TrafficConfig cfg;
  cfg.cooperation_factor = 1.5;
  try {
    cfg.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.field().find("cooperation_factor") != std::string::npos);
  }
}
