#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arena/geometry.hpp"

namespace arena {

/// Spacing of every derived polyline (lanes, connectors, dividers).
inline constexpr double kSamplingStep = 0.5;
/// Default lane width when no `width` tag is present.
inline constexpr double kDefaultLaneWidth = 3.5;
/// Maximum snapping distance for route endpoints.
inline constexpr double kSnapRadius = 10.0;

struct GeoOrigin {
  double latitude = 0.0;
  double longitude = 0.0;

  /// Throws ValidationError when outside [-90,90] x [-180,180].
  void validate() const;
};

/// Local tangent-plane projection (east, north) in meters about `origin`.
Vec2 project_to_local(const GeoOrigin& origin, double latitude,
                      double longitude);

enum class MapLayer : std::uint8_t {
  kDrivableArea = 0,
  kPedCrossing = 1,
  kLaneDivider = 2,
  kLaneBoundary = 3,
};
inline constexpr std::size_t kMapLayerCount = 4;
std::string_view to_string(MapLayer layer);
MapLayer map_layer_from_string(std::string_view name);

struct Lane {
  std::string id;
  Polyline centerline;
  std::vector<double> cum;  // cumulative arclength of centerline
  double width = kDefaultLaneWidth;
  std::vector<std::string> successors;
  std::vector<std::string> predecessors;
  std::optional<std::string> left_neighbor;
  std::optional<std::string> right_neighbor;
  double speed_limit = 13.9;
  bool connector = false;
  std::int64_t way_id = 0;  // 0 for junction connectors

  double length() const { return cum.empty() ? 0.0 : cum.back(); }
  Vec2 point(double s) const { return point_at(centerline, cum, s); }
  double heading(double s) const { return heading_at(centerline, cum, s); }
  Pose2 pose(double s) const {
    const Vec2 p = point(s);
    return {p.x, p.y, heading(s)};
  }
  Projection project(const Vec2& p) const {
    return project_onto(centerline, cum, p);
  }
};

struct Junction {
  std::string id;
  Vec2 center;
  std::vector<std::string> incoming;
  std::vector<std::string> outgoing;
  std::vector<std::string> connectors;
  Polygon area;
};

/// Two junction connectors whose centerlines come within a vehicle width.
struct LaneConflict {
  std::string other_lane;
  double s_self = 0.0;   // arclength of the conflict point on this lane
  double s_other = 0.0;  // and on the other lane
};

struct Divider {
  MapLayer category = MapLayer::kLaneDivider;
  Polyline points;
};

/// Lane-level road graph in a local metric frame. Immutable once built;
/// share it through `std::shared_ptr<const RoadGraph>`.
struct RoadGraph {
  GeoOrigin origin;
  std::string name;
  std::size_t road_count = 0;
  std::map<std::string, Lane> lanes;
  std::vector<Junction> junctions;
  std::vector<Polygon> drivable_area;
  std::vector<Divider> dividers;
  std::vector<Polygon> crossings;
  std::map<std::string, std::vector<LaneConflict>> conflicts;

  // Bounding boxes parallel to the geometry vectors, filled by finalize().
  std::map<std::string, Rect> lane_bounds;
  std::vector<Rect> drivable_bounds;
  std::vector<Rect> divider_bounds;
  std::vector<Rect> crossing_bounds;

  const Lane& lane(const std::string& id) const;
  bool empty() const { return lanes.empty(); }
  bool in_drivable_area(const Vec2& p, double tolerance = 0.0) const;
  void finalize();
};

/// Named start/goal pair shipped with a map fixture.
struct RouteSpec {
  std::string name;
  Vec2 start;
  Vec2 goal;
};

/// Source-neutral road skeleton: nodes in local meters plus tagged ways.
struct MapSkeleton {
  struct Way {
    std::int64_t id = 0;
    std::vector<std::int64_t> refs;
    std::map<std::string, std::string> tags;
  };
  GeoOrigin origin;
  std::string name;
  std::map<std::int64_t, Vec2> nodes;
  std::map<std::int64_t, std::map<std::string, std::string>> node_tags;
  std::vector<Way> ways;
  std::vector<RouteSpec> routes;
};

/// Per-highway-class defaults applied when a way carries no explicit tags.
struct HighwayDefaults {
  std::string_view highway;
  int lanes_per_direction;
  double speed_limit;  // m/s
  bool implied_oneway;
};

/// Documented tag-default table. Unlisted highway values are not roads.
std::span<const HighwayDefaults> highway_defaults();

/// Derived lane layout for one way (exposed for documentation and tests).
struct WayProfile {
  int forward_lanes = 1;
  int backward_lanes = 1;
  double lane_width = kDefaultLaneWidth;
  double speed_limit = 13.9;
};
std::optional<WayProfile> way_profile(
    const std::map<std::string, std::string>& tags);

MapSkeleton parse_osm_skeleton(const std::string& osm_xml,
                               const GeoOrigin& origin);
MapSkeleton parse_map_fixture(const std::string& fixture_json);
RoadGraph build_road_graph(const MapSkeleton& skeleton);

/// OSM XML v0.6 to lane graph.
RoadGraph parse_osm(const std::string& osm_xml, const GeoOrigin& origin);

/// Names of the map fixtures compiled into the library.
std::vector<std::string> fixture_map_names();
/// Raw JSON text of an embedded fixture; throws ArenaError if unknown.
const std::string& fixture_map_text(const std::string& name);

/// Loads "fixture:<name>", a `.osm` file (origin from its <bounds>) or a
/// fixture `.json` file.
MapSkeleton load_map_skeleton(const std::string& source);

struct Route {
  std::vector<std::string> lane_sequence;
  Polyline reference_path;
  std::vector<double> cum;
  double total_length = 0.0;

  Vec2 point(double s) const { return point_at(reference_path, cum, s); }
  double heading(double s) const {
    return heading_at(reference_path, cum, s);
  }
  Projection project(const Vec2& p) const {
    return project_onto(reference_path, cum, p);
  }
  Projection project(const Vec2& p, double s_lo, double s_hi) const {
    return project_onto_window(reference_path, cum, p, s_lo, s_hi);
  }
};

struct LaneSnap {
  std::string lane_id;
  double s = 0.0;
  double distance = 0.0;
};

/// Nearest lane centerline; ties go to the lowest lane id.
std::optional<LaneSnap> snap_to_lane(const RoadGraph& graph, const Vec2& p,
                                     double max_distance = kSnapRadius);

/// Shortest-arclength route. Lanes chain via successor links (travel to the
/// lane end) or neighbor links (an immediate lateral hop at the current
/// arclength). Throws SnapError / UnreachableError.
Route plan_route(const RoadGraph& graph, const Vec2& start, const Vec2& goal);

/// Builds the route polyline for an explicit lane chain. `entry` and `exit`
/// are the arclengths on the first and last lanes.
Route route_from_sequence(const RoadGraph& graph,
                          const std::vector<std::string>& lanes, double entry,
                          double exit);

struct LayoutSlice {
  struct LanePiece {
    std::string lane_id;
    Polyline centerline;
  };
  std::vector<LanePiece> lanes;
  std::vector<Divider> dividers;
  std::vector<Polygon> crossings;
  std::vector<Polygon> drivable_area;

  bool empty() const {
    return lanes.empty() && dividers.empty() && crossings.empty() &&
           drivable_area.empty();
  }
};

/// Geometry within a square of half-size `radius` around `center`, in the
/// center's frame (x forward, y left).
LayoutSlice query_local_layout(const RoadGraph& graph, const Pose2& center,
                               double radius);

struct GraphIssue {
  std::string kind;
  std::string detail;
};
/// Checks the structural invariants; empty result means valid.
std::vector<GraphIssue> validate_graph(const RoadGraph& graph);

}  // namespace arena
