#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arena/geometry.hpp"
#include "arena/roadnet.hpp"
#include "arena/traffic.hpp"

namespace arena {

// Frame conventions used throughout this module:
//   ego frame:    x forward, y left, z up (meters)
//   camera frame: z forward, x right, y down (meters)
//   image:        u to the right, v down (pixels, origin at the top-left
//                 corner of the top-left pixel)

using Mat3 = std::array<std::array<double, 3>, 3>;

Vec3 mul(const Mat3& m, const Vec3& v);
Mat3 mul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
double determinant(const Mat3& m);
Mat3 identity3();

inline constexpr int kImageWidth = 400;
inline constexpr int kImageHeight = 224;
/// Points closer than this along the optical axis are culled.
inline constexpr double kNearPlane = 0.1;
inline constexpr int kDefaultBands = 16;

struct CameraModel {
  std::string name;
  Mat3 K{};
  Mat3 R{};  // ego -> camera rotation
  Vec3 T;    // ego -> camera translation
  int width = kImageWidth;
  int height = kImageHeight;

  /// Throws ValidationError for a malformed K or a non-rotation R.
  void validate() const;
  /// Camera center in the ego frame.
  Vec3 center() const;
  bool operator==(const CameraModel&) const = default;
};

struct RigOptions {
  double focal = 316.0;
  double mount_height = 1.5;
  bool operator==(const RigOptions&) const = default;
};

/// FRONT, FRONT_RIGHT, FRONT_LEFT, BACK, BACK_LEFT, BACK_RIGHT at yaw
/// offsets 0, -55, 55, 180, 110, -110 degrees.
std::vector<CameraModel> default_rig(const RigOptions& options = {});

/// Camera looking along ego yaw `yaw` from `center` (ego frame).
CameraModel make_camera(std::string name, double yaw, const Vec3& center,
                        double focal);

/// The ten object classes, in canvas channel order.
inline constexpr std::array<std::string_view, 10> kObjectClasses{
    "car",        "truck",      "construction_vehicle",
    "bus",        "trailer",    "barrier",
    "motorcycle", "bicycle",    "pedestrian",
    "traffic_cone"};
inline constexpr std::size_t kBoxChannels = kObjectClasses.size();
inline constexpr std::size_t kLayoutChannels = kMapLayerCount + kBoxChannels;
int object_class_index(std::string_view name);

struct LayoutBox {
  int category = 0;  // index into kObjectClasses
  Vec3 center;       // ego frame, z at half height
  Vec3 size;         // length, width, height
  double yaw = 0.0;  // relative to ego heading
  std::string source_id;

  /// Bottom face then top face; each face counter-clockwise from the
  /// front-left corner seen from above.
  std::array<Vec3, 8> vertices() const;
  bool operator==(const LayoutBox&) const = default;
};

struct MapLayerGeometry {
  std::vector<Polyline> lines;
  std::vector<Polygon> polygons;
  bool operator==(const MapLayerGeometry&) const = default;
};

struct LayoutFrame {
  std::int64_t frame_id = 0;
  Pose2 ego_pose;
  double radius = 0.0;
  std::array<MapLayerGeometry, kMapLayerCount> map_layers;
  std::vector<LayoutBox> boxes;
  bool operator==(const LayoutFrame&) const = default;
};

/// Ego-centric layout. Boxes cover every non-ego vehicle whose center lies
/// in the square of half-size `radius`; map layers come from the local
/// layout query (polygon layers as polygons, line layers as polylines).
LayoutFrame extract_layout(const WorldState& world, const RoadGraph& graph,
                           double radius, std::int64_t frame_id = 0);

/// Pixel for each point, or nothing when the camera depth is below the
/// near plane. Pixels outside the image are returned unchanged.
std::vector<std::optional<Vec2>> project_points(std::span<const Vec3> points,
                                                const CameraModel& cam);
std::optional<Vec2> project_point(const Vec3& p, const CameraModel& cam);

enum class CanvasKind : std::uint8_t { kMap, kBox, kLayout, kBev };
std::string_view to_string(CanvasKind kind);
CanvasKind canvas_kind_from_string(std::string_view name);

/// Channel-major binary raster: data[(c * height + y) * width + x] is 0/1.
struct Canvas {
  CanvasKind kind = CanvasKind::kLayout;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Canvas() = default;
  Canvas(CanvasKind kind, int width, int height, int channels);
  std::uint8_t at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::uint8_t& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t count(int c) const;
  bool operator==(const Canvas&) const = default;
};

/// Map channels: polygon layers filled, line layers as 1-px segments after
/// subdividing the ground geometry every 0.5 m and clipping at the near
/// plane.
Canvas render_map_canvas(const LayoutFrame& frame, const CameraModel& cam);
/// Box channels: filled convex outline of the (near-clipped) 8 vertices.
Canvas render_box_canvas(const LayoutFrame& frame, const CameraModel& cam);
/// Map block followed by box block, one canvas per camera.
std::vector<Canvas> render_canvases(const LayoutFrame& frame,
                                    std::span<const CameraModel> rig);

struct BevConfig {
  double extent = 50.0;      // half-size, meters
  double resolution = 0.25;  // meters per pixel
  bool operator==(const BevConfig&) const = default;
};

/// Top-down raster in the ego frame, +x up and +y left. Row 0 is the far
/// front edge. Polygons fill pixels whose centers are inside.
Canvas rasterize_bev(const LayoutFrame& frame, const BevConfig& config);

/// For each x and k in [0, bands): sin(2^k pi x), cos(2^k pi x).
std::vector<double> fourier_embed(std::span<const double> values, int bands);

/// reference^-1 * current, expressed in the reference frame.
Pose2 relative_pose(const Pose2& reference, const Pose2& current);
Pose2 compose(const Pose2& a, const Pose2& delta);

/// Flattened K (row-major), R (row-major), T: 21 values.
std::vector<double> camera_parameters(const CameraModel& cam);

struct CameraCondition {
  CameraModel camera;
  Canvas layout_canvas;
  std::vector<double> cam_embedding;
  bool operator==(const CameraCondition&) const = default;
};

struct ReferenceFrame {
  std::int64_t frame_id = 0;
  Pose2 ego_pose;
};

struct ConditionPayload {
  std::int64_t frame_id = 0;
  int bands = kDefaultBands;
  std::vector<CameraCondition> cameras;
  std::vector<LayoutBox> boxes;
  std::vector<std::vector<double>> box_embeddings;
  BevConfig bev_config;
  Canvas bev_grid;
  std::optional<std::int64_t> reference_frame_id;
  std::optional<Pose2> relative_pose;
  std::optional<std::vector<double>> rel_embedding;
  std::string text_prompt;
  bool operator==(const ConditionPayload&) const = default;
};

ConditionPayload build_condition_payload(
    const LayoutFrame& frame, std::span<const CameraModel> rig,
    const std::optional<ReferenceFrame>& reference, const std::string& prompt,
    const BevConfig& bev = {}, int bands = kDefaultBands);

}  // namespace arena
