#include "arena/geometry.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace arena {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

Vec2 heading_vector(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

Vec2 to_local(const Pose2& frame, const Vec2& p) {
  const double c = std::cos(frame.yaw);
  const double s = std::sin(frame.yaw);
  const double dx = p.x - frame.x;
  const double dy = p.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_world(const Pose2& frame, const Vec2& p) {
  const double c = std::cos(frame.yaw);
  const double s = std::sin(frame.yaw);
  return {frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y};
}

Pose2 to_local(const Pose2& frame, const Pose2& p) {
  const Vec2 q = to_local(frame, p.position());
  return {q.x, q.y, wrap_angle(p.yaw - frame.yaw)};
}

Pose2 to_world(const Pose2& frame, const Pose2& p) {
  const Vec2 q = to_world(frame, p.position());
  return {q.x, q.y, wrap_angle(frame.yaw + p.yaw)};
}

std::vector<double> cumulative_length(std::span<const Vec2> poly) {
  std::vector<double> cum(poly.size(), 0.0);
  for (std::size_t i = 1; i < poly.size(); ++i) {
    cum[i] = cum[i - 1] + (poly[i] - poly[i - 1]).norm();
  }
  return cum;
}

double polyline_length(std::span<const Vec2> poly) {
  double len = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) {
    len += (poly[i] - poly[i - 1]).norm();
  }
  return len;
}

Projection project_onto(std::span<const Vec2> poly,
                        std::span<const double> cum, const Vec2& p) {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (poly.empty()) return best;
  if (poly.size() == 1) {
    best.foot = poly[0];
    best.distance = (p - poly[0]).norm();
    return best;
  }
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 d = poly[i + 1] - a;
    const double len2 = d.dot(d);
    double t = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 foot = a + d * t;
    const double dist = (p - foot).norm();
    if (dist < best.distance) {
      best.distance = dist;
      best.foot = foot;
      best.s = cum[i] + t * (cum[i + 1] - cum[i]);
      const double side = d.cross(p - a);
      best.lateral = side >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

Projection project_onto(std::span<const Vec2> poly, const Vec2& p) {
  const auto cum = cumulative_length(poly);
  return project_onto(poly, cum, p);
}

Projection project_onto_window(std::span<const Vec2> poly,
                               std::span<const double> cum, const Vec2& p,
                               double s_lo, double s_hi) {
  if (poly.size() < 2) return project_onto(poly, cum, p);
  s_lo = std::clamp(s_lo, 0.0, cum.back());
  s_hi = std::clamp(s_hi, s_lo, cum.back());
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const double len = cum[i + 1] - cum[i];
    if (cum[i + 1] < s_lo || cum[i] > s_hi) continue;
    const Vec2 a = poly[i];
    const Vec2 d = poly[i + 1] - a;
    double t = len > 0.0 ? (p - a).dot(d) / (len * len) : 0.0;
    const double t_lo = len > 0.0 ? std::max(0.0, (s_lo - cum[i]) / len) : 0.0;
    const double t_hi = len > 0.0 ? std::min(1.0, (s_hi - cum[i]) / len) : 0.0;
    t = std::clamp(t, t_lo, std::max(t_lo, t_hi));
    const Vec2 foot = a + d * t;
    const double dist = (p - foot).norm();
    if (dist < best.distance) {
      best.distance = dist;
      best.foot = foot;
      best.s = cum[i] + t * len;
      best.lateral = d.cross(p - a) >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

namespace {

std::size_t segment_index(std::span<const double> cum, double s) {
  auto it = std::upper_bound(cum.begin(), cum.end(), s);
  std::size_t i = it == cum.begin() ? 0 : (it - cum.begin()) - 1;
  return std::min(i, cum.size() - 2);
}

}  // namespace

Vec2 point_at(std::span<const Vec2> poly, std::span<const double> cum,
              double s) {
  if (poly.size() == 1) return poly[0];
  if (s <= 0.0) return poly.front();
  if (s >= cum.back()) return poly.back();
  const std::size_t i = segment_index(cum, s);
  const double seg = cum[i + 1] - cum[i];
  const double t = seg > 0.0 ? (s - cum[i]) / seg : 0.0;
  return poly[i] + (poly[i + 1] - poly[i]) * t;
}

double heading_at(std::span<const Vec2> poly, std::span<const double> cum,
                  double s) {
  if (poly.size() < 2) return 0.0;
  const std::size_t i = segment_index(cum, std::clamp(s, 0.0, cum.back()));
  const Vec2 d = poly[i + 1] - poly[i];
  return std::atan2(d.y, d.x);
}

Polyline resample(std::span<const Vec2> poly, double step) {
  Polyline out;
  if (poly.empty()) return out;
  const auto cum = cumulative_length(poly);
  const double total = cum.back();
  if (total <= 0.0) return {poly.front()};
  const auto n = static_cast<std::size_t>(std::ceil(total / step - 1e-9));
  out.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(point_at(poly, cum, total * static_cast<double>(k) /
                                          static_cast<double>(n)));
  }
  out.push_back(poly.back());
  return out;
}

Polyline sub_polyline(std::span<const Vec2> poly, std::span<const double> cum,
                      double s0, double s1) {
  Polyline out;
  if (poly.empty()) return out;
  s0 = std::clamp(s0, 0.0, cum.back());
  s1 = std::clamp(s1, s0, cum.back());
  out.push_back(point_at(poly, cum, s0));
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (cum[i] > s0 && cum[i] < s1) out.push_back(poly[i]);
  }
  out.push_back(point_at(poly, cum, s1));
  return out;
}

Polyline offset_polyline(std::span<const Vec2> poly, double offset) {
  Polyline out;
  const std::size_t n = poly.size();
  if (n < 2) return {poly.begin(), poly.end()};
  out.reserve(n);
  auto normal_of = [&](std::size_t i) {
    Vec2 d = poly[i + 1] - poly[i];
    const double len = d.norm();
    return Vec2{-d.y / len, d.x / len};
  };
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 nrm;
    if (i == 0) {
      nrm = normal_of(0);
    } else if (i == n - 1) {
      nrm = normal_of(n - 2);
    } else {
      const Vec2 n0 = normal_of(i - 1);
      const Vec2 n1 = normal_of(i);
      Vec2 m = n0 + n1;
      const double mlen = m.norm();
      if (mlen < 1e-9) {
        nrm = n1;
      } else {
        m = m * (1.0 / mlen);
        // Miter length, limited so hairpins do not explode.
        const double c = std::max(m.dot(n1), 0.5);
        nrm = m * (1.0 / c);
      }
    }
    out.push_back(poly[i] + nrm * offset);
  }
  return out;
}

Polyline dedupe(std::span<const Vec2> poly, double eps) {
  Polyline out;
  for (const auto& p : poly) {
    if (out.empty() || (p - out.back()).norm() > eps) out.push_back(p);
  }
  return out;
}

bool point_in_polygon(std::span<const Vec2> poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

double polygon_area(std::span<const Vec2> poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    a += poly[j].cross(poly[i]);
  }
  return 0.5 * a;
}

Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  auto turn = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a - o).cross(b - o);
  };
  for (const auto& p : pts) {
    while (k >= 2 && turn(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && turn(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.dot(d);
  const double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0;
  return (p - (a + d * t)).norm();
}

Rect bounds_of(std::span<const Vec2> pts) {
  Rect r{std::numeric_limits<double>::infinity(),
         std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity()};
  for (const auto& p : pts) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

std::vector<Polyline> clip_polyline(std::span<const Vec2> poly,
                                    const Rect& window) {
  std::vector<Polyline> pieces;
  Polyline current;
  auto flush = [&] {
    if (current.size() >= 2) pieces.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 d = poly[i + 1] - a;
    double t0 = 0.0;
    double t1 = 1.0;
    const std::array<double, 4> p{-d.x, d.x, -d.y, d.y};
    const std::array<double, 4> q{a.x - window.min_x, window.max_x - a.x,
                                  a.y - window.min_y, window.max_y - a.y};
    bool visible = true;
    for (int k = 0; k < 4 && visible; ++k) {
      if (p[k] == 0.0) {
        if (q[k] < 0.0) visible = false;
      } else {
        const double r = q[k] / p[k];
        if (p[k] < 0.0) {
          t0 = std::max(t0, r);
        } else {
          t1 = std::min(t1, r);
        }
        if (t0 > t1) visible = false;
      }
    }
    if (!visible) {
      flush();
      continue;
    }
    const Vec2 pa = t0 == 0.0 ? a : a + d * t0;
    const Vec2 pb = t1 == 1.0 ? poly[i + 1] : a + d * t1;
    if (current.empty() || t0 > 0.0) {
      flush();
      current.push_back(pa);
    }
    current.push_back(pb);
    if (t1 < 1.0) flush();
  }
  flush();
  return pieces;
}

Polygon clip_polygon(std::span<const Vec2> poly, const Rect& window) {
  Polygon out(poly.begin(), poly.end());
  auto clip_edge = [&](auto inside, auto intersect) {
    if (out.empty()) return;
    Polygon in = std::move(out);
    out.clear();
    Vec2 prev = in.back();
    bool prev_in = inside(prev);
    for (const auto& cur : in) {
      const bool cur_in = inside(cur);
      if (cur_in) {
        if (!prev_in) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(intersect(prev, cur));
      }
      prev = cur;
      prev_in = cur_in;
    }
  };
  auto at_x = [](double x) {
    return [x](const Vec2& a, const Vec2& b) {
      const double t = (x - a.x) / (b.x - a.x);
      return Vec2{x, a.y + t * (b.y - a.y)};
    };
  };
  auto at_y = [](double y) {
    return [y](const Vec2& a, const Vec2& b) {
      const double t = (y - a.y) / (b.y - a.y);
      return Vec2{a.x + t * (b.x - a.x), y};
    };
  };
  clip_edge([&](const Vec2& p) { return p.x >= window.min_x; },
            at_x(window.min_x));
  clip_edge([&](const Vec2& p) { return p.x <= window.max_x; },
            at_x(window.max_x));
  clip_edge([&](const Vec2& p) { return p.y >= window.min_y; },
            at_y(window.min_y));
  clip_edge([&](const Vec2& p) { return p.y <= window.max_y; },
            at_y(window.max_y));
  return out.size() >= 3 ? out : Polygon{};
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 f = heading_vector(yaw) * (0.5 * length);
  const Vec2 l = Vec2{-std::sin(yaw), std::cos(yaw)} * (0.5 * width);
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

double sat_separation(const OrientedBox& a, const OrientedBox& b) {
  const std::array<Vec2, 4> axes{heading_vector(a.yaw),
                                 heading_vector(a.yaw + 0.5 * std::numbers::pi),
                                 heading_vector(b.yaw),
                                 heading_vector(b.yaw + 0.5 * std::numbers::pi)};
  const Vec2 d = b.center - a.center;
  double separation = -std::numeric_limits<double>::infinity();
  auto radius = [](const OrientedBox& box, const Vec2& axis) {
    const Vec2 f = heading_vector(box.yaw);
    const Vec2 l{-f.y, f.x};
    return 0.5 * box.length * std::abs(f.dot(axis)) +
           0.5 * box.width * std::abs(l.dot(axis));
  };
  for (const auto& axis : axes) {
    const double gap =
        std::abs(d.dot(axis)) - radius(a, axis) - radius(b, axis);
    separation = std::max(separation, gap);
  }
  return separation;
}

Polyline hermite_curve(const Pose2& from, const Pose2& to, double step) {
  const Vec2 p0 = from.position();
  const Vec2 p1 = to.position();
  const double chord = (p1 - p0).norm();
  const Vec2 m0 = heading_vector(from.yaw) * chord;
  const Vec2 m1 = heading_vector(to.yaw) * chord;
  const int dense = std::max(16, static_cast<int>(std::ceil(chord / 0.05)));
  Polyline curve;
  curve.reserve(dense + 1);
  for (int i = 0; i <= dense; ++i) {
    const double t = static_cast<double>(i) / dense;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    curve.push_back(p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11);
  }
  Polyline out = resample(curve, step);
  out.front() = p0;
  out.back() = p1;
  return out;
}

}  // namespace arena
