#include "arena/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "arena/errors.hpp"

namespace arena {

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

Mat3 transpose(const Mat3& m) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = m[j][i];
  }
  return out;
}

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

// ---------------------------------------------------------------------------
// Cameras

void CameraModel::validate() const {
  const std::string field = "camera[" + name + "]";
  if (width <= 0 || height <= 0) {
    throw ValidationError(field + ".image_size", "must be positive");
  }
  if (!(K[0][0] > 0.0) || !(K[1][1] > 0.0) || K[1][0] != 0.0 ||
      K[2][0] != 0.0 || K[2][1] != 0.0 || K[2][2] != 1.0) {
    throw ValidationError(field + ".K",
                          "must be upper triangular with positive focal "
                          "terms and K[2][2] = 1");
  }
  const Mat3 rtr = mul(transpose(R), R);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > 1e-9) {
        throw ValidationError(field + ".R", "must be orthonormal");
      }
    }
  }
  if (std::abs(determinant(R) - 1.0) > 1e-9) {
    throw ValidationError(field + ".R", "must have determinant 1");
  }
  for (double v : {T.x, T.y, T.z}) {
    if (!std::isfinite(v)) throw ValidationError(field + ".T", "non-finite");
  }
}

Vec3 CameraModel::center() const {
  const Vec3 t = mul(transpose(R), T);
  return {-t.x, -t.y, -t.z};
}

CameraModel make_camera(std::string name, double yaw, const Vec3& center,
                        double focal) {
  CameraModel cam;
  cam.name = std::move(name);
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  // Rows are the camera axes (right, down, forward) written in the ego frame.
  cam.R = {{{s, -c, 0.0}, {0.0, 0.0, -1.0}, {c, s, 0.0}}};
  const Vec3 rc = mul(cam.R, center);
  cam.T = {-rc.x, -rc.y, -rc.z};
  cam.K = {{{focal, 0.0, kImageWidth / 2.0},
            {0.0, focal, kImageHeight / 2.0},
            {0.0, 0.0, 1.0}}};
  return cam;
}

std::vector<CameraModel> default_rig(const RigOptions& options) {
  struct Mount {
    const char* name;
    double yaw_deg;
  };
  static constexpr Mount kMounts[] = {
      {"FRONT", 0.0},   {"FRONT_RIGHT", -55.0}, {"FRONT_LEFT", 55.0},
      {"BACK", 180.0},  {"BACK_LEFT", 110.0},   {"BACK_RIGHT", -110.0},
  };
  std::vector<CameraModel> rig;
  for (const auto& m : kMounts) {
    const double yaw = m.yaw_deg * std::numbers::pi / 180.0;
    const Vec3 center{std::cos(yaw), 0.5 * std::sin(yaw), options.mount_height};
    rig.push_back(make_camera(m.name, yaw, center, options.focal));
  }
  return rig;
}

int object_class_index(std::string_view name) {
  for (std::size_t i = 0; i < kObjectClasses.size(); ++i) {
    if (kObjectClasses[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("category", "unknown object class '" +
                                        std::string(name) + "'");
}

std::array<Vec3, 8> LayoutBox::vertices() const {
  const OrientedBox footprint{{center.x, center.y}, yaw, size.x, size.y};
  const auto corners = footprint.corners();
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {corners[i].x, corners[i].y, center.z - 0.5 * size.z};
    out[i + 4] = {corners[i].x, corners[i].y, center.z + 0.5 * size.z};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout extraction

LayoutFrame extract_layout(const WorldState& world, const RoadGraph& graph,
                           double radius, std::int64_t frame_id) {
  if (!(radius > 0.0)) throw ValidationError("radius", "must be positive");
  LayoutFrame frame;
  frame.frame_id = frame_id;
  frame.radius = radius;
  const VehicleState& ego = world.ego();
  frame.ego_pose = ego.pose;

  const LayoutSlice slice = query_local_layout(graph, ego.pose, radius);
  auto& drivable =
      frame.map_layers[static_cast<std::size_t>(MapLayer::kDrivableArea)];
  drivable.polygons = slice.drivable_area;
  frame.map_layers[static_cast<std::size_t>(MapLayer::kPedCrossing)].polygons =
      slice.crossings;
  for (const auto& d : slice.dividers) {
    frame.map_layers[static_cast<std::size_t>(d.category)].lines.push_back(
        d.points);
  }

  for (const auto& [id, v] : world.vehicles) {
    if (v.role == VehicleRole::kEgo) continue;
    const Vec2 local = to_local(ego.pose, v.pose.position());
    if (std::abs(local.x) > radius || std::abs(local.y) > radius) continue;
    LayoutBox box;
    box.category = 0;
    box.center = {local.x, local.y, 0.5 * v.footprint.height};
    box.size = {v.footprint.length, v.footprint.width, v.footprint.height};
    box.yaw = wrap_angle(v.pose.yaw - ego.pose.yaw);
    box.source_id = id;
    frame.boxes.push_back(std::move(box));
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Projection

namespace {

Vec3 to_camera(const CameraModel& cam, const Vec3& p) {
  return mul(cam.R, p) + cam.T;
}

Vec2 pixel_of(const CameraModel& cam, const Vec3& pc) {
  const auto& K = cam.K;
  const double x = pc.x / pc.z;
  const double y = pc.y / pc.z;
  return {K[0][0] * x + K[0][1] * y + K[0][2], K[1][1] * y + K[1][2]};
}

}  // namespace

std::optional<Vec2> project_point(const Vec3& p, const CameraModel& cam) {
  const Vec3 pc = to_camera(cam, p);
  if (!(pc.z > kNearPlane)) return std::nullopt;
  return pixel_of(cam, pc);
}

std::vector<std::optional<Vec2>> project_points(std::span<const Vec3> points,
                                                const CameraModel& cam) {
  std::vector<std::optional<Vec2>> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project_point(p, cam));
  return out;
}

// ---------------------------------------------------------------------------
// Canvases

std::string_view to_string(CanvasKind kind) {
  switch (kind) {
    case CanvasKind::kMap: return "map_canvas";
    case CanvasKind::kBox: return "box_canvas";
    case CanvasKind::kLayout: return "layout_canvas";
    case CanvasKind::kBev: return "bev_grid";
  }
  return "layout_canvas";
}

CanvasKind canvas_kind_from_string(std::string_view name) {
  for (auto k : {CanvasKind::kMap, CanvasKind::kBox, CanvasKind::kLayout,
                 CanvasKind::kBev}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("kind", "unknown canvas kind '" + std::string(name) +
                                    "'");
}

Canvas::Canvas(CanvasKind kind_, int width_, int height_, int channels_)
    : kind(kind_),
      width(width_),
      height(height_),
      channels(channels_),
      data(static_cast<std::size_t>(width_) * height_ * channels_, 0) {}

std::size_t Canvas::count(int c) const {
  const auto begin = data.begin() + static_cast<long>(c) * width * height;
  return static_cast<std::size_t>(
      std::count(begin, begin + static_cast<long>(width) * height, 1));
}

namespace {

/// Even-odd scanline fill of pixels whose centers lie inside `poly`
/// (continuous pixel coordinates).
void fill_polygon(Canvas& canvas, int channel, std::span<const Vec2> poly) {
  if (poly.size() < 3) return;
  double ymin = poly[0].y;
  double ymax = poly[0].y;
  for (const auto& p : poly) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const int row0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
  const int row1 =
      std::min(canvas.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
  std::vector<double> xs;
  for (int row = row0; row <= row1; ++row) {
    const double yc = row + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % poly.size()];
      if ((a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y)) {
        xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int c1 = std::min(canvas.width - 1,
                              static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
      for (int col = c0; col <= c1; ++col) canvas.at(channel, row, col) = 1;
    }
  }
}

/// 1-px Bresenham segment, clipped to the canvas.
void draw_segment(Canvas& canvas, int channel, const Vec2& a, const Vec2& b) {
  const Rect window{0.0, 0.0, static_cast<double>(canvas.width),
                    static_cast<double>(canvas.height)};
  const Polyline seg{a, b};
  for (const auto& piece : clip_polyline(seg, window)) {
    if (piece.size() < 2) continue;
    auto cell = [&](const Vec2& p) {
      return std::array<int, 2>{
          std::clamp(static_cast<int>(std::floor(p.x)), 0, canvas.width - 1),
          std::clamp(static_cast<int>(std::floor(p.y)), 0, canvas.height - 1)};
    };
    auto [x0, y0] = cell(piece.front());
    const auto [x1, y1] = cell(piece.back());
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      canvas.at(channel, y0, x0) = 1;
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
}

/// Clips a camera-frame segment to the near plane.
std::optional<std::array<Vec3, 2>> clip_near(Vec3 a, Vec3 b) {
  const bool ina = a.z > kNearPlane;
  const bool inb = b.z > kNearPlane;
  if (!ina && !inb) return std::nullopt;
  if (ina && inb) return std::array<Vec3, 2>{a, b};
  const double t = (kNearPlane - a.z) / (b.z - a.z);
  Vec3 m = a + (b - a) * t;
  m.z = kNearPlane * (1.0 + 1e-12);
  if (ina) return std::array<Vec3, 2>{a, m};
  return std::array<Vec3, 2>{m, b};
}

/// Sutherland-Hodgman against the near plane, camera frame.
std::vector<Vec3> clip_polygon_near(const std::vector<Vec3>& poly) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % poly.size()];
    const bool ina = a.z > kNearPlane;
    const bool inb = b.z > kNearPlane;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = (kNearPlane - a.z) / (b.z - a.z);
      Vec3 m = a + (b - a) * t;
      m.z = kNearPlane * (1.0 + 1e-12);
      out.push_back(m);
    }
  }
  return out;
}

constexpr double kSubdivision = 0.5;

void draw_map(Canvas& canvas, int channel_offset, const LayoutFrame& frame,
              const CameraModel& cam) {
  for (std::size_t layer = 0; layer < kMapLayerCount; ++layer) {
    const int channel = channel_offset + static_cast<int>(layer);
    const auto& geometry = frame.map_layers[layer];
    for (const auto& poly : geometry.polygons) {
      std::vector<Vec3> pc;
      pc.reserve(poly.size());
      for (const auto& p : poly) pc.push_back(to_camera(cam, {p.x, p.y, 0.0}));
      const auto clipped = clip_polygon_near(pc);
      if (clipped.size() < 3) continue;
      Polygon pixels;
      pixels.reserve(clipped.size());
      for (const auto& q : clipped) pixels.push_back(pixel_of(cam, q));
      fill_polygon(canvas, channel, pixels);
    }
    for (const auto& line : geometry.lines) {
      for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i];
        const Vec2 b = line[i + 1];
        const int pieces = std::max(
            1, static_cast<int>(std::ceil((b - a).norm() / kSubdivision)));
        for (int k = 0; k < pieces; ++k) {
          const Vec2 p0 = a + (b - a) * (static_cast<double>(k) / pieces);
          const Vec2 p1 = a + (b - a) * (static_cast<double>(k + 1) / pieces);
          const auto seg = clip_near(to_camera(cam, {p0.x, p0.y, 0.0}),
                                     to_camera(cam, {p1.x, p1.y, 0.0}));
          if (!seg) continue;
          draw_segment(canvas, channel, pixel_of(cam, (*seg)[0]),
                       pixel_of(cam, (*seg)[1]));
        }
      }
    }
  }
}

void draw_boxes(Canvas& canvas, int channel_offset, const LayoutFrame& frame,
                const CameraModel& cam) {
  static constexpr int kEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                        {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                        {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  for (const auto& box : frame.boxes) {
    const auto vertices = box.vertices();
    std::array<Vec3, 8> pc;
    for (int i = 0; i < 8; ++i) pc[i] = to_camera(cam, vertices[i]);
    std::vector<Vec2> pixels;
    for (const auto& e : kEdges) {
      if (auto seg = clip_near(pc[e[0]], pc[e[1]])) {
        pixels.push_back(pixel_of(cam, (*seg)[0]));
        pixels.push_back(pixel_of(cam, (*seg)[1]));
      }
    }
    if (pixels.size() < 3) continue;
    const Polygon hull = convex_hull(std::move(pixels));
    fill_polygon(canvas, channel_offset + box.category, hull);
  }
}

}  // namespace

Canvas render_map_canvas(const LayoutFrame& frame, const CameraModel& cam) {
  Canvas canvas(CanvasKind::kMap, cam.width, cam.height,
                static_cast<int>(kMapLayerCount));
  draw_map(canvas, 0, frame, cam);
  return canvas;
}

Canvas render_box_canvas(const LayoutFrame& frame, const CameraModel& cam) {
  Canvas canvas(CanvasKind::kBox, cam.width, cam.height,
                static_cast<int>(kBoxChannels));
  draw_boxes(canvas, 0, frame, cam);
  return canvas;
}

std::vector<Canvas> render_canvases(const LayoutFrame& frame,
                                    std::span<const CameraModel> rig) {
  if (rig.empty()) throw ValidationError("rig", "must contain a camera");
  std::vector<Canvas> out;
  out.reserve(rig.size());
  for (const auto& cam : rig) {
    Canvas canvas(CanvasKind::kLayout, cam.width, cam.height,
                  static_cast<int>(kLayoutChannels));
    draw_map(canvas, 0, frame, cam);
    draw_boxes(canvas, static_cast<int>(kMapLayerCount), frame, cam);
    out.push_back(std::move(canvas));
  }
  return out;
}

// ---------------------------------------------------------------------------
// BEV

Canvas rasterize_bev(const LayoutFrame& frame, const BevConfig& config) {
  if (!(config.extent > 0.0) || !std::isfinite(config.extent)) {
    throw ValidationError("bev.extent", "must be positive");
  }
  if (!(config.resolution > 0.0) || !std::isfinite(config.resolution)) {
    throw ValidationError("bev.resolution", "must be positive");
  }
  const int n = static_cast<int>(
      std::lround(2.0 * config.extent / config.resolution));
  Canvas canvas(CanvasKind::kBev, n, n, static_cast<int>(kMapLayerCount));
  // Continuous pixel coordinates: column grows toward -y, row toward -x.
  auto to_px = [&](const Vec2& p) {
    return Vec2{(config.extent - p.y) / config.resolution,
                (config.extent - p.x) / config.resolution};
  };
  for (std::size_t layer = 0; layer < kMapLayerCount; ++layer) {
    const int channel = static_cast<int>(layer);
    const auto& geometry = frame.map_layers[layer];
    for (const auto& poly : geometry.polygons) {
      Polygon px;
      px.reserve(poly.size());
      for (const auto& p : poly) px.push_back(to_px(p));
      fill_polygon(canvas, channel, px);
    }
    for (const auto& line : geometry.lines) {
      for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        draw_segment(canvas, channel, to_px(line[i]), to_px(line[i + 1]));
      }
    }
  }
  return canvas;
}

// ---------------------------------------------------------------------------
// Embeddings and poses

std::vector<double> fourier_embed(std::span<const double> values, int bands) {
  if (bands < 1) throw ValidationError("bands", "must be at least 1");
  std::vector<double> out;
  out.reserve(values.size() * 2 * static_cast<std::size_t>(bands));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    if (!std::isfinite(x)) {
      throw ValidationError("values[" + std::to_string(i) + "]",
                            "non-finite input");
    }
    for (int k = 0; k < bands; ++k) {
      const double arg = std::ldexp(std::numbers::pi * x, k);
      out.push_back(std::sin(arg));
      out.push_back(std::cos(arg));
    }
  }
  return out;
}

Pose2 relative_pose(const Pose2& reference, const Pose2& current) {
  return to_local(reference, current);
}

Pose2 compose(const Pose2& a, const Pose2& delta) { return to_world(a, delta); }

std::vector<double> camera_parameters(const CameraModel& cam) {
  std::vector<double> v;
  v.reserve(21);
  for (const auto& row : cam.K) v.insert(v.end(), row.begin(), row.end());
  for (const auto& row : cam.R) v.insert(v.end(), row.begin(), row.end());
  v.insert(v.end(), {cam.T.x, cam.T.y, cam.T.z});
  return v;
}

ConditionPayload build_condition_payload(
    const LayoutFrame& frame, std::span<const CameraModel> rig,
    const std::optional<ReferenceFrame>& reference, const std::string& prompt,
    const BevConfig& bev, int bands) {
  if (rig.empty()) throw ValidationError("rig", "must contain a camera");
  if (bands < 1) throw ValidationError("bands", "must be at least 1");
  ConditionPayload payload;
  payload.frame_id = frame.frame_id;
  payload.bands = bands;
  payload.text_prompt = prompt;
  payload.bev_config = bev;
  auto canvases = render_canvases(frame, rig);
  for (std::size_t i = 0; i < rig.size(); ++i) {
    rig[i].validate();
    payload.cameras.push_back({rig[i], std::move(canvases[i]),
                               fourier_embed(camera_parameters(rig[i]), bands)});
  }
  payload.boxes = frame.boxes;
  for (const auto& box : frame.boxes) {
    std::vector<double> flat;
    flat.reserve(24);
    for (const auto& v : box.vertices()) flat.insert(flat.end(), {v.x, v.y, v.z});
    payload.box_embeddings.push_back(fourier_embed(flat, bands));
  }
  payload.bev_grid = rasterize_bev(frame, bev);
  if (reference) {
    payload.reference_frame_id = reference->frame_id;
    const Pose2 delta = relative_pose(reference->ego_pose, frame.ego_pose);
    payload.relative_pose = delta;
    const std::array<double, 3> values{delta.x, delta.y, delta.yaw};
    payload.rel_embedding = fourier_embed(values, bands);
  }
  return payload;
}

}  // namespace arena
