#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace arena {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  bool operator==(const Vec2&) const = default;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  bool operator==(const Vec3&) const = default;
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Planar pose. Yaw is measured counter-clockwise from +x.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose2&) const = default;
};

using Polyline = std::vector<Vec2>;
using Polygon = std::vector<Vec2>;

double wrap_angle(double a);
Vec2 heading_vector(double yaw);

/// Map-frame point expressed in the frame of `frame` (x forward, y left).
Vec2 to_local(const Pose2& frame, const Vec2& p);
Vec2 to_world(const Pose2& frame, const Vec2& p);
Pose2 to_local(const Pose2& frame, const Pose2& p);
Pose2 to_world(const Pose2& frame, const Pose2& p);

// ---------------------------------------------------------------------------
// Polylines

/// Cumulative arclength, same size as the polyline, starting at 0.
std::vector<double> cumulative_length(std::span<const Vec2> poly);
double polyline_length(std::span<const Vec2> poly);

struct Projection {
  double s = 0.0;        // arclength of the foot point
  double distance = 0.0; // unsigned distance to the foot point
  double lateral = 0.0;  // signed, positive to the left of travel
  Vec2 foot;
};

Projection project_onto(std::span<const Vec2> poly,
                        std::span<const double> cum, const Vec2& p);
Projection project_onto(std::span<const Vec2> poly, const Vec2& p);
/// Nearest point among arclengths [s_lo, s_hi] only. Keeps progress
/// tracking from jumping to another pass of a self-approaching path.
Projection project_onto_window(std::span<const Vec2> poly,
                               std::span<const double> cum, const Vec2& p,
                               double s_lo, double s_hi);

/// Point at arclength s, clamped to the ends.
Vec2 point_at(std::span<const Vec2> poly, std::span<const double> cum,
              double s);
double heading_at(std::span<const Vec2> poly, std::span<const double> cum,
                  double s);

/// Uniform arclength resampling; keeps both endpoints exactly.
Polyline resample(std::span<const Vec2> poly, double step);

/// Portion of the polyline between arclengths s0 <= s1 (clamped).
Polyline sub_polyline(std::span<const Vec2> poly, std::span<const double> cum,
                      double s0, double s1);

/// Lateral offset with mitered joints; positive offset is to the left.
Polyline offset_polyline(std::span<const Vec2> poly, double offset);

/// Removes consecutive points closer than eps.
Polyline dedupe(std::span<const Vec2> poly, double eps = 1e-9);

// ---------------------------------------------------------------------------
// Polygons

bool point_in_polygon(std::span<const Vec2> poly, const Vec2& p);
double polygon_area(std::span<const Vec2> poly);
Polygon convex_hull(std::vector<Vec2> pts);
double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b);

/// Axis-aligned rectangle used as a clip window.
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(const Vec2& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  bool intersects(const Rect& o) const {
    return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y &&
           o.min_y <= max_y;
  }
};

Rect bounds_of(std::span<const Vec2> pts);

/// Liang-Barsky clip; one output piece per maximal inside run.
std::vector<Polyline> clip_polyline(std::span<const Vec2> poly,
                                    const Rect& window);
/// Sutherland-Hodgman clip against an axis-aligned window.
Polygon clip_polygon(std::span<const Vec2> poly, const Rect& window);

// ---------------------------------------------------------------------------
// Oriented boxes

struct OrientedBox {
  Vec2 center;
  double yaw = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;

  /// Corners counter-clockwise starting at front-left.
  std::array<Vec2, 4> corners() const;
};

/// Separating-axis distance between two boxes: the largest gap over the
/// four face normals. Negative values mean overlap, and the negated value
/// is the penetration depth along the axis of least overlap.
double sat_separation(const OrientedBox& a, const OrientedBox& b);

inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  return sat_separation(a, b) < 0.0;
}

/// Cubic Hermite between two poses, tangent magnitudes equal to the chord.
Polyline hermite_curve(const Pose2& from, const Pose2& to, double step);

}  // namespace arena
