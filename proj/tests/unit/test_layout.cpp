#include <doctest.h>

#include <cmath>

#include "arena/errors.hpp"
#include "arena/layout.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace arena;

namespace {

CameraModel pinhole(double f) {
  CameraModel cam;
  cam.name = "TEST";
  cam.K = {{{f, 0, 200}, {0, f, 112}, {0, 0, 1}}};
  cam.R = identity3();
  cam.T = {0, 0, 0};
  return cam;
}

const CameraModel& camera_named(const std::vector<CameraModel>& rig, const std::string& name) {
  for (const auto& c : rig) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no camera " + name);
}

/// Pixel by hand: p_cam = R p + T, then divide through K.
std::pair<double, double> hand_project(const CameraModel& cam, Vec3 p) {
  const oracle::V3 c = oracle::mul(cam.R, {p.x, p.y, p.z});
  const oracle::V3 q{c.x + cam.T.x, c.y + cam.T.y, c.z + cam.T.z};
  const oracle::V3 h = oracle::mul(cam.K, q);
  return {h.x / h.z, h.y / h.z};
}

WorldState two_car_world(double dx, double dy) {
  WorldState w;
  VehicleState ego = scenes::vehicle(kEgoId, 0.0, 0.0, 0.0, 0.0);
  ego.role = VehicleRole::kEgo;
  w.vehicles[ego.id] = ego;
  w.vehicles["bg-0000"] = scenes::vehicle("bg-0000", dx, dy, 0.0, 0.0);
  return w;
}

}  // namespace

TEST_CASE("projection: optical axis and the hand-computed pinhole case") {
  const auto a = project_point({0, 0, 10}, pinhole(316));
  REQUIRE(a);
  CHECK(a->x == doctest::Approx(200.0));
  CHECK(a->y == doctest::Approx(112.0));
  const auto b = project_point({1, 0.5, 10}, pinhole(500));
  REQUIRE(b);
  CHECK(b->x == doctest::Approx(250.0).epsilon(1e-12));
  CHECK(b->y == doctest::Approx(137.0).epsilon(1e-12));
  CHECK_FALSE(project_point({0, 0, -3}, pinhole(500)));
  CHECK_FALSE(project_point({0, 0, 0.05}, pinhole(500)));
}

TEST_CASE("projection: pixel rays pass through their source points") {
  const auto rig = default_rig();
  oracle::Rng rng(17);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const CameraModel& cam = rig[i % rig.size()];
    const Vec3 p{rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(-1, 4)};
    const auto px = project_point(p, cam);
    if (!px) continue;
    ++checked;
    const double d = oracle::backcast_distance(cam.K, cam.R, {cam.T.x, cam.T.y, cam.T.z},
                                               px->x, px->y, {p.x, p.y, p.z});
    CHECK(d <= 1e-6);
  }
  CHECK(checked > 100);
}

TEST_CASE("default rig is six valid cameras") {
  const auto rig = default_rig();
  REQUIRE(rig.size() == 6);
  for (const auto& cam : rig) CHECK_NOTHROW(cam.validate());
  CameraModel bad = rig[0];
  bad.R[0][0] = 2.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("layout extraction") {
  const RoadGraph g = scenes::single_lane(200.0);
  SUBCASE("vehicle dead ahead") {
    const LayoutFrame f = extract_layout(two_car_world(10.0, 0.0), g, 50.0);
    REQUIRE(f.boxes.size() == 1);
    CHECK(f.boxes[0].center.x == doctest::Approx(10.0));
    CHECK(f.boxes[0].center.y == doctest::Approx(0.0));
    CHECK(f.boxes[0].center.z == doctest::Approx(0.5 * Footprint{}.height));
    CHECK(f.boxes[0].yaw == doctest::Approx(0.0));
    CHECK_FALSE(f.map_layers[0].polygons.empty());
  }
  SUBCASE("radius filter") {
    const LayoutFrame f = extract_layout(two_car_world(100.0, 0.0), g, 50.0);
    CHECK(f.boxes.empty());
  }
}

TEST_CASE("canvases") {
  const auto rig = default_rig();
  SUBCASE("empty frame gives empty canvases") {
    const auto canvases = render_canvases(LayoutFrame{}, rig);
    REQUIRE(canvases.size() == rig.size());
    for (const auto& c : canvases) {
      CHECK(c.channels == static_cast<int>(kLayoutChannels));
      CHECK(std::all_of(c.data.begin(), c.data.end(), [](auto v) { return v == 0; }));
    }
  }
  SUBCASE("box behind the front camera is invisible to it") {
    LayoutFrame f;
    f.boxes.push_back({0, {-10, 0, 0.8}, {4.6, 1.8, 1.6}, 0.0, "bg"});
    const Canvas front = render_box_canvas(f, camera_named(rig, "FRONT"));
    CHECK(std::all_of(front.data.begin(), front.data.end(), [](auto v) { return v == 0; }));
    const Canvas back = render_box_canvas(f, camera_named(rig, "BACK"));
    CHECK(back.count(0) > 0);
  }
  SUBCASE("straight divider ahead rasterizes to its projected length") {
    LayoutFrame f;
    const auto layer = static_cast<std::size_t>(MapLayer::kLaneDivider);
    f.map_layers[layer].lines.push_back({{10.0, 1.5}, {20.0, 1.5}});
    const CameraModel& cam = camera_named(rig, "FRONT");
    const Canvas c = render_map_canvas(f, cam);
    const auto [u0, v0] = hand_project(cam, {10.0, 1.5, 0.0});
    const auto [u1, v1] = hand_project(cam, {20.0, 1.5, 0.0});
    const double expected = std::max(std::abs(u1 - u0), std::abs(v1 - v0)) + 1.0;
    CHECK(std::abs(static_cast<double>(c.count(static_cast<int>(layer))) - expected) <= 2.0);
  }
  SUBCASE("rendering is deterministic") {
    LayoutFrame f;
    f.boxes.push_back({3, {12, -2, 1.5}, {10, 2.5, 3}, 0.2, "bus"});
    f.map_layers[0].polygons.push_back({{0, -5}, {40, -5}, {40, 5}, {0, 5}});
    CHECK(render_canvases(f, rig) == render_canvases(f, rig));
  }
}

TEST_CASE("mirroring the scene mirrors the left and right cameras") {
  const auto rig = default_rig();
  LayoutFrame f, m;
  f.boxes.push_back({0, {12, 3, 0.8}, {4.6, 1.8, 1.6}, 0.3, "a"});
  f.map_layers[2].lines.push_back({{2, 4}, {30, 6}});
  m = f;
  m.boxes[0].center.y = -3;
  m.boxes[0].yaw = -0.3;
  m.map_layers[2].lines[0] = {{2, -4}, {30, -6}};
  const Canvas left = render_canvases(f, std::vector{camera_named(rig, "FRONT_LEFT")})[0];
  const Canvas right = render_canvases(m, std::vector{camera_named(rig, "FRONT_RIGHT")})[0];
  std::size_t mismatched = 0, lit = 0;
  for (int c = 0; c < left.channels; ++c) {
    for (int y = 0; y < left.height; ++y) {
      for (int x = 0; x < left.width; ++x) {
        lit += left.at(c, y, x);
        mismatched += left.at(c, y, x) != right.at(c, y, left.width - 1 - x);
      }
    }
  }
  CHECK(lit > 0);
  // Pixel-center rounding on slanted edges can differ by a hairline.
  CHECK(static_cast<double>(mismatched) <= 0.02 * static_cast<double>(lit));
}

TEST_CASE("BEV raster") {
  BevConfig cfg{50.0, 0.5};
  SUBCASE("empty frame") {
    const Canvas c = rasterize_bev(LayoutFrame{}, cfg);
    CHECK(c.width == 200);
    CHECK(c.count(0) == 0);
  }
  SUBCASE("full coverage") {
    LayoutFrame f;
    f.map_layers[0].polygons.push_back({{-60, -60}, {60, -60}, {60, 60}, {-60, 60}});
    const Canvas c = rasterize_bev(f, cfg);
    CHECK(c.count(0) == static_cast<std::size_t>(c.width) * c.height);
  }
  SUBCASE("lane strip area") {
    LayoutFrame f;
    f.map_layers[0].polygons.push_back({{-50, -1.75}, {50, -1.75}, {50, 1.75}, {-50, 1.75}});
    const Canvas c = rasterize_bev(f, cfg);
    const double expected = 100.0 * 3.5 / (0.5 * 0.5);
    CHECK(std::abs(static_cast<double>(c.count(0)) - expected) <= 0.02 * expected);
  }
  SUBCASE("forward is up") {
    LayoutFrame f;
    f.map_layers[0].polygons.push_back({{40, -1}, {48, -1}, {48, 1}, {40, 1}});
    const Canvas c = rasterize_bev(f, cfg);
    int top = 0;
    for (int y = 0; y < c.height / 2; ++y)
      for (int x = 0; x < c.width; ++x) top += c.at(0, y, x);
    CHECK(static_cast<std::size_t>(top) == c.count(0));
  }
}

TEST_CASE("fourier embedding") {
  const std::vector<double> zero{0.0};
  const auto e0 = fourier_embed(zero, 5);
  REQUIRE(e0.size() == 10);
  for (std::size_t i = 0; i < e0.size(); i += 2) {
    CHECK(e0[i] == 0.0);
    CHECK(e0[i + 1] == 1.0);
  }
  CHECK(fourier_embed(std::vector<double>{1, 2, 3}, 4).size() == 24);
  const auto half = fourier_embed(std::vector<double>{0.5}, 1);
  CHECK(std::abs(half[0] - 1.0) <= 1e-12);
  CHECK(std::abs(half[1]) <= 1e-12);
  oracle::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-3, 3);
    const auto a = fourier_embed(std::vector<double>{x}, 6);
    const auto b = fourier_embed(std::vector<double>{x + 2.0}, 6);
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(fourier_embed(std::vector<double>{std::nan("")}, 2), ValidationError);
}

TEST_CASE("relative pose") {
  const Pose2 same = relative_pose({1, 2, 0.3}, {1, 2, 0.3});
  CHECK(same.x == doctest::Approx(0.0));
  CHECK(same.y == doctest::Approx(0.0));
  CHECK(same.yaw == doctest::Approx(0.0));
  const Pose2 d = relative_pose({0, 0, std::numbers::pi / 2}, {0, 5, std::numbers::pi / 2});
  CHECK(d.x == doctest::Approx(5.0));
  CHECK(std::abs(d.y) <= 1e-12);
  CHECK(std::abs(d.yaw) <= 1e-12);
  oracle::Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Pose2 a{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3)};
    const Pose2 b{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3)};
    const Pose2 back = compose(a, relative_pose(a, b));
    CHECK(std::abs(back.x - b.x) <= 1e-9);
    CHECK(std::abs(back.y - b.y) <= 1e-9);
    CHECK(std::abs(wrap_angle(back.yaw - b.yaw)) <= 1e-9);
  }
}

TEST_CASE("condition payload dimensions") {
  const auto rig = default_rig();
  LayoutFrame f;
  f.frame_id = 4;
  f.boxes.push_back({0, {10, 0, 0.8}, {4.6, 1.8, 1.6}, 0.0, "bg"});
  const int bands = 4;
  const auto p = build_condition_payload(f, rig, std::nullopt, "sunny", {}, bands);
  REQUIRE(p.box_embeddings.size() == 1);
  CHECK(p.box_embeddings[0].size() == 2 * bands * 24);
  REQUIRE(p.cameras.size() == rig.size());
  CHECK(p.cameras[0].cam_embedding.size() == 2 * bands * 21);
  CHECK_FALSE(p.reference_frame_id);
  CHECK_FALSE(p.rel_embedding);
  const auto q = build_condition_payload(LayoutFrame{}, rig, ReferenceFrame{3, {0, 0, 0}},
                                         "rain", {}, bands);
  REQUIRE(q.rel_embedding);
  CHECK(q.rel_embedding->size() == 2 * bands * 3);
  CHECK(q.cameras[0].cam_embedding.size() == p.cameras[0].cam_embedding.size());
}
