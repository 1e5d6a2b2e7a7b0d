#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "arena/agent.hpp"
#include "arena/errors.hpp"
#include "scenes.hpp"

using namespace arena;

namespace {

AgentObservation observation(double speed) {
  AgentObservation obs;
  obs.frame_id = 3;
  obs.images.push_back(EncodedImage::from_image(Image(4, 2, 3)));
  obs.ego_status.speed = speed;
  obs.command = {20.0, 0.0};
  obs.timestamp = 1.5;
  return obs;
}

struct Road {
  RoadGraph graph = scenes::single_lane(1000.0);
  std::string lane = graph.lanes.begin()->first;
  Route route = plan_route(graph, {0.0, 0.0}, {900.0, 0.0});
};

}  // namespace

TEST_CASE("constant velocity goes straight at the current speed") {
  const AgentPlan plan = constant_velocity_plan(observation(2.0));
  for (int k = 0; k < 6; ++k) {
    CHECK(plan.waypoints[k].x == doctest::Approx(k + 1.0));
    CHECK(plan.waypoints[k].y == 0.0);
    CHECK(plan.waypoints[k].yaw == 0.0);
  }
  CHECK(plan.issued_at == 1.5);
}

TEST_CASE("hard left turns left quickly") {
  const AgentPlan plan = hard_left_plan(observation(0.0));
  // The arc sweeps more than half a turn in 3 s, so only the first
  // knots are compared before the heading wraps.
  double prev_yaw = 0.0;
  for (int k = 0; k < 4; ++k) {
    CHECK(plan.waypoints[k].yaw > prev_yaw);
    prev_yaw = plan.waypoints[k].yaw;
  }
  CHECK(plan.waypoints[5].y > 5.0);
}

TEST_CASE("plan messages round trip and enforce six waypoints") {
  const AgentPlan plan = constant_velocity_plan(observation(3.0));
  CHECK(parse_agent_plan(serialize(plan)) == plan);
  const AgentObservation obs = observation(3.0);
  CHECK(parse_agent_observation(serialize(obs)) == obs);

  auto doc = nlohmann::json::parse(serialize(plan));
  doc["waypoints"].erase(doc["waypoints"].size() - 1);
  REQUIRE(doc["waypoints"].size() == 5);
  CHECK_THROWS_AS(parse_agent_plan(doc.dump()), ContractError);
  CHECK_THROWS_AS(parse_agent_plan("{"), ProtocolError);
}

TEST_CASE("observation validation") {
  AgentObservation obs = observation(1.0);
  obs.images.clear();
  CHECK_THROWS_AS(obs.validate(), ValidationError);
  obs = observation(std::nan(""));
  CHECK_THROWS_AS(obs.validate(), ValidationError);
}

TEST_CASE("rule-based agent keeps to a straight lane") {
  Road road;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  const WorldState w =
      spawn_background_traffic(road.graph, cfg, {road.lane, 10.0, 10.0, {road.lane}});
  const auto out = rule_based_plan(w, road.graph, road.route);
  CHECK_FALSE(out.degraded);
  double prev = 0.0;
  for (const auto& wp : out.plan.waypoints) {
    CHECK(std::abs(wp.y) < 0.2);
    CHECK(wp.x > prev);
    prev = wp.x;
  }
}

TEST_CASE("rule-based agent stops for a stationary leader") {
  Road road;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  WorldState w = spawn_background_traffic(road.graph, cfg, {road.lane, 10.0, 8.0, {road.lane}});
  VehicleState leader = scenes::vehicle("bg-0000", 30.0, 0.0, 0.0, 0.0);
  leader.lane_id = road.lane;
  leader.lane_s = 30.0;
  w.vehicles[leader.id] = leader;
  const auto out = rule_based_plan(w, road.graph, road.route);
  const double free_travel = 8.0 * 3.0;
  CHECK(out.plan.waypoints[5].x < free_travel);
  CHECK(out.plan.waypoints[5].x < 20.0 - Footprint{}.length);
}

TEST_CASE("rule-based agent recovers toward the route when far away") {
  Road road;
  TrafficConfig cfg;
  cfg.spawn_density = 0.0;
  WorldState w = spawn_background_traffic(road.graph, cfg, {road.lane, 10.0, 5.0, {road.lane}});
  w.ego().pose = {50.0, 30.0, 0.0};
  const auto out = rule_based_plan(w, road.graph, road.route);
  CHECK(out.degraded);
  CHECK(out.plan.waypoints[5].y < 0.0);
}

TEST_CASE("dispatch and server handler") {
  const AgentObservation obs = observation(4.0);
  const AgentResult r = request_plan({AgentKind::kConstantVelocity}, obs);
  CHECK(r.plan == constant_velocity_plan(obs));
  CHECK_THROWS_AS(request_plan({AgentKind::kRuleBased}, obs), ContractError);
  CHECK(parse_agent_plan(handle_plan_body(serialize(obs), AgentKind::kHardLeft)) ==
        hard_left_plan(obs));
  AgentBinding remote{AgentKind::kRemote, "http://127.0.0.1:9", 500, ""};
  CHECK_THROWS_AS(request_plan(remote, obs), TransportError);
}
