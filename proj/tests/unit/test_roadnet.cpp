#include <doctest.h>

#include <cmath>

#include "arena/errors.hpp"
#include "arena/roadnet.hpp"
#include "oracles.hpp"
#include "route_oracle.hpp"
#include "scenes.hpp"

using namespace arena;

namespace {

const GeoOrigin kOrigin{1.3000, 103.7880};

RoadGraph load(const std::string& source) {
  return build_road_graph(load_map_skeleton(source));
}

}  // namespace

TEST_CASE("minimal OSM: one residential way gives two default lanes") {
  const RoadGraph g = parse_osm(scenes::read_file(scenes::data_path("minimal.osm")), kOrigin);
  CHECK(g.road_count == 1);
  REQUIRE(g.lanes.size() == 2);
  const auto defaults = highway_defaults();
  const auto it = std::find_if(defaults.begin(), defaults.end(),
                               [](const auto& d) { return d.highway == "residential"; });
  REQUIRE(it != defaults.end());
  for (const auto& [id, lane] : g.lanes) {
    CHECK(lane.width == doctest::Approx(3.5));
    CHECK(lane.speed_limit == doctest::Approx(it->speed_limit));
  }
  CHECK(validate_graph(g).empty());
}

TEST_CASE("tag defaults for residential and oneway") {
  auto p = way_profile({{"highway", "residential"}});
  REQUIRE(p);
  CHECK(p->forward_lanes == 1);
  CHECK(p->backward_lanes == 1);
  CHECK(p->lane_width == doctest::Approx(3.5));
  CHECK(p->speed_limit == doctest::Approx(13.9));
  p = way_profile({{"highway", "residential"}, {"oneway", "yes"}});
  REQUIRE(p);
  CHECK(p->backward_lanes == 0);
  p = way_profile({{"highway", "primary"}, {"lanes", "4"}, {"maxspeed", "50"}});
  REQUIRE(p);
  CHECK(p->forward_lanes + p->backward_lanes == 4);
  CHECK(p->speed_limit == doctest::Approx(50 / 3.6));
  CHECK_FALSE(way_profile({{"highway", "footway"}}));
}

TEST_CASE("origin projects to the local origin") {
  const Vec2 p = project_to_local(kOrigin, kOrigin.latitude, kOrigin.longitude);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
}

TEST_CASE("OSM error paths") {
  CHECK_THROWS_AS(parse_osm(scenes::read_file(scenes::data_path("empty_doc.osm")), kOrigin),
                  EmptyMapError);
  CHECK_THROWS_AS(parse_osm(scenes::read_file(scenes::data_path("malformed.osm")), kOrigin),
                  ParseError);
  try {
    parse_osm(scenes::read_file(scenes::data_path("dangling.osm")), kOrigin);
    FAIL("expected a topology error");
  } catch (const TopologyError& e) {
    REQUIRE_FALSE(e.ids().empty());
    CHECK(e.ids().front().find("999") != std::string::npos);
  }
  CHECK_THROWS_AS(load_map_skeleton(scenes::data_path("empty.osm")), EmptyMapError);
}

TEST_CASE("ENU projection is isometric to 0.1% within 1 km") {
  oracle::Rng rng(7);
  const double m_lat = 1.0 / 111320.0;
  for (int i = 0; i < 500; ++i) {
    const double lat1 = kOrigin.latitude + rng.uniform(-700, 700) * m_lat;
    const double lon1 = kOrigin.longitude + rng.uniform(-700, 700) * m_lat;
    const double lat2 = kOrigin.latitude + rng.uniform(-700, 700) * m_lat;
    const double lon2 = kOrigin.longitude + rng.uniform(-700, 700) * m_lat;
    const double truth = oracle::haversine(lat1, lon1, lat2, lon2);
    if (truth < 1.0) continue;
    const Vec2 a = project_to_local(kOrigin, lat1, lon1);
    const Vec2 b = project_to_local(kOrigin, lat2, lon2);
    CHECK(std::abs((a - b).norm() - truth) / truth <= 1e-3);
  }
}

TEST_CASE("every fixture map is closed and valid") {
  for (const auto& name : fixture_map_names()) {
    CAPTURE(name);
    const RoadGraph g = load("fixture:" + name);
    CHECK_FALSE(g.empty());
    CHECK(validate_graph(g).empty());
    for (const auto& [id, lane] : g.lanes) {
      for (const auto& succ : lane.successors) {
        CHECK((g.lane(succ).centerline.front() - lane.centerline.back()).norm() <= 0.5);
      }
    }
  }
}

TEST_CASE("route on a lane to itself has zero length") {
  const RoadGraph g = scenes::single_lane(100.0);
  const Route r = plan_route(g, {30.0, 0.0}, {30.0, 0.0});
  CHECK(r.lane_sequence.size() == 1);
  CHECK(r.total_length == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("three chained 100 m lanes give a 300 m route") {
  MapSkeleton sk;
  for (int i = 0; i < 4; ++i) sk.nodes[i + 1] = {100.0 * i, 0.0};
  sk.ways.push_back(scenes::straight_way(10, 1, 2));
  sk.ways.push_back(scenes::straight_way(11, 2, 3));
  sk.ways.push_back(scenes::straight_way(12, 3, 4));
  const RoadGraph g = build_road_graph(sk);
  const Route r = plan_route(g, {0.0, 0.0}, {300.0, 0.0});
  CHECK(r.total_length == doctest::Approx(300.0).epsilon(1e-8));
  CHECK(std::abs(r.total_length - polyline_length(r.reference_path)) <= 1e-6);
  const auto from = snap_to_lane(g, {0.0, 0.0});
  const auto to = snap_to_lane(g, {300.0, 0.0});
  REQUIRE(from);
  REQUIRE(to);
  const auto oracle_len = oracle::brute_force_route(g, *from, *to);
  REQUIRE(oracle_len);
  CHECK(r.total_length == doctest::Approx(*oracle_len).epsilon(1e-9));
}

TEST_CASE("route errors") {
  const RoadGraph g = scenes::lane_with_stub();
  CHECK_THROWS_AS(plan_route(g, {10.0, 0.0}, {20.0, 500.0}), UnreachableError);
  CHECK_THROWS_AS(plan_route(g, {10.0, 100.0}, {20.0, 0.0}), SnapError);
}

TEST_CASE("route optimality matches brute force on a small grid") {
  const RoadGraph g = load(scenes::data_path("grid.osm"));
  REQUIRE(g.lanes.size() <= 50);
  std::vector<const Lane*> roads;
  for (const auto& [id, lane] : g.lanes) {
    if (!lane.connector) roads.push_back(&lane);
  }
  oracle::Rng rng(11);
  int routed = 0;
  for (int i = 0; i < 120; ++i) {
    const Lane& la = *roads[rng.next() % roads.size()];
    const Lane& lb = *roads[rng.next() % roads.size()];
    const Vec2 a = la.point(rng.uniform(0.1, 0.9) * la.length());
    const Vec2 b = lb.point(rng.uniform(0.1, 0.9) * lb.length());
    const auto from = snap_to_lane(g, a);
    const auto to = snap_to_lane(g, b);
    REQUIRE(from);
    REQUIRE(to);
    const auto expected = oracle::brute_force_route(g, *from, *to);
    if (!expected) {
      CHECK_THROWS_AS(plan_route(g, a, b), UnreachableError);
      continue;
    }
    const Route r = plan_route(g, a, b);
    CHECK(r.total_length == doctest::Approx(*expected).epsilon(1e-9));
    ++routed;
  }
  CHECK(routed > 40);
}

TEST_CASE("local layout query") {
  const RoadGraph g = scenes::single_lane(1000.0);
  SUBCASE("nothing in range") {
    const auto slice = query_local_layout(g, {500.0, 300.0, 0.0}, 10.0);
    CHECK(slice.empty());
  }
  SUBCASE("clipping a long lane to the square") {
    const auto slice = query_local_layout(g, {500.0, 0.0, 0.0}, 50.0);
    REQUIRE(slice.lanes.size() == 1);
    const double len = polyline_length(slice.lanes[0].centerline);
    CHECK(len >= 100.0 - 1e-6);
    CHECK(len <= 100.0 + 2 * kSamplingStep);
  }
  SUBCASE("rotated ego sees a northern lane ahead") {
    MapSkeleton sk;
    sk.nodes[1] = {-20.0, 30.0};
    sk.nodes[2] = {20.0, 30.0};
    sk.ways.push_back(scenes::straight_way(10, 1, 2));
    const RoadGraph north = build_road_graph(sk);
    const auto slice =
        query_local_layout(north, {0.0, 0.0, std::numbers::pi / 2}, 40.0);
    REQUIRE(slice.lanes.size() == 1);
    for (const auto& p : slice.lanes[0].centerline) {
      CHECK(p.x == doctest::Approx(30.0).epsilon(1e-9));
    }
  }
  SUBCASE("pure function") {
    const auto a = query_local_layout(g, {500.0, 0.0, 0.3}, 50.0);
    const auto b = query_local_layout(g, {500.0, 0.0, 0.3}, 50.0);
    REQUIRE(a.lanes.size() == b.lanes.size());
    CHECK(a.lanes[0].centerline == b.lanes[0].centerline);
    CHECK(a.drivable_area == b.drivable_area);
  }
}

TEST_CASE("drivable area covers lane centerlines") {
  const RoadGraph g = load("fixture:boston-seaport");
  for (const auto& [id, lane] : g.lanes) {
    CHECK(g.in_drivable_area(lane.point(0.5 * lane.length())));
  }
  CHECK_FALSE(g.in_drivable_area({1e5, 1e5}));
}
