#include "arena/roadnet.hpp"

#include <algorithm>
#include <charconv>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <queue>
#include <set>
#include <sstream>

#include "arena/errors.hpp"
#include "embedded_fixtures.hpp"

namespace arena {

namespace {

constexpr double kEarthRadius = 6371008.8;
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kConnectorLateralAccel = 3.0;  // m/s^2 through junction turns

constexpr std::array<HighwayDefaults, 16> kHighwayDefaults{{
    {"motorway", 2, 27.8, true},
    {"motorway_link", 1, 16.7, true},
    {"trunk", 2, 22.2, false},
    {"trunk_link", 1, 16.7, false},
    {"primary", 1, 16.7, false},
    {"primary_link", 1, 13.9, false},
    {"secondary", 1, 16.7, false},
    {"secondary_link", 1, 13.9, false},
    {"tertiary", 1, 13.9, false},
    {"tertiary_link", 1, 13.9, false},
    {"unclassified", 1, 13.9, false},
    {"residential", 1, 13.9, false},
    {"living_street", 1, 5.6, false},
    {"service", 1, 8.3, false},
    {"road", 1, 13.9, false},
    {"busway", 1, 13.9, false},
}};

/// Leading number of a tag value such as "3" or "50 mph".
std::optional<double> parse_number(const std::string& text) {
  const char* first = text.data();
  const char* last = first + text.size();
  while (first != last && *first == ' ') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr == first || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<double> parse_speed(const std::string& text) {
  auto v = parse_number(text);
  if (!v || *v <= 0) return std::nullopt;
  if (text.find("mph") != std::string::npos) return *v * 0.44704;
  return *v / 3.6;
}

std::string tag_or(const std::map<std::string, std::string>& tags,
                   const std::string& key, const std::string& fallback = "") {
  auto it = tags.find(key);
  return it == tags.end() ? fallback : it->second;
}

/// Largest heading change per metre over windows of about two metres.
double peak_curvature(const Polyline& pts, const std::vector<double>& cum) {
  double peak = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    while (j + 1 < pts.size() && cum[j] - cum[i] < 2.0) ++j;
    if (j <= i + 1) break;
    const double h0 = std::atan2(pts[i + 1].y - pts[i].y, pts[i + 1].x - pts[i].x);
    const double h1 = std::atan2(pts[j].y - pts[j - 1].y, pts[j].x - pts[j - 1].x);
    const double span = 0.5 * (cum[j] + cum[j - 1]) - 0.5 * (cum[i] + cum[i + 1]);
    if (span > 1e-6) peak = std::max(peak, std::abs(wrap_angle(h1 - h0)) / span);
  }
  return peak;
}

}  // namespace

void GeoOrigin::validate() const {
  if (!std::isfinite(latitude) || latitude < -90.0 || latitude > 90.0) {
    throw ValidationError("origin.latitude", "must lie in [-90, 90]");
  }
  if (!std::isfinite(longitude) || longitude < -180.0 || longitude > 180.0) {
    throw ValidationError("origin.longitude", "must lie in [-180, 180]");
  }
}

Vec2 project_to_local(const GeoOrigin& origin, double latitude,
                      double longitude) {
  const double east = kEarthRadius * std::cos(origin.latitude * kDegToRad) *
                      (longitude - origin.longitude) * kDegToRad;
  const double north = kEarthRadius * (latitude - origin.latitude) * kDegToRad;
  return {east, north};
}

std::string_view to_string(MapLayer layer) {
  switch (layer) {
    case MapLayer::kDrivableArea: return "drivable_area";
    case MapLayer::kPedCrossing: return "ped_crossing";
    case MapLayer::kLaneDivider: return "lane_divider";
    case MapLayer::kLaneBoundary: return "lane_boundary";
  }
  return "unknown";
}

MapLayer map_layer_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kMapLayerCount; ++i) {
    const auto layer = static_cast<MapLayer>(i);
    if (to_string(layer) == name) return layer;
  }
  throw ValidationError("category", "unknown map layer '" +
                                        std::string(name) + "'");
}

const Lane& RoadGraph::lane(const std::string& id) const {
  auto it = lanes.find(id);
  if (it == lanes.end()) throw ArenaError("unknown lane id '" + id + "'");
  return it->second;
}

bool RoadGraph::in_drivable_area(const Vec2& p, double tolerance) const {
  for (std::size_t i = 0; i < drivable_area.size(); ++i) {
    const Rect& b = drivable_bounds[i];
    if (p.x < b.min_x - tolerance || p.x > b.max_x + tolerance ||
        p.y < b.min_y - tolerance || p.y > b.max_y + tolerance) {
      continue;
    }
    const auto& poly = drivable_area[i];
    if (point_in_polygon(poly, p)) return true;
    if (tolerance > 0.0) {
      for (std::size_t k = 0, j = poly.size() - 1; k < poly.size(); j = k++) {
        if (distance_to_segment(p, poly[j], poly[k]) <= tolerance) return true;
      }
    }
  }
  return false;
}

void RoadGraph::finalize() {
  lane_bounds.clear();
  for (const auto& [id, lane] : lanes) {
    lane_bounds[id] = bounds_of(lane.centerline);
  }
  drivable_bounds.clear();
  for (const auto& poly : drivable_area) drivable_bounds.push_back(bounds_of(poly));
  divider_bounds.clear();
  for (const auto& d : dividers) divider_bounds.push_back(bounds_of(d.points));
  crossing_bounds.clear();
  for (const auto& c : crossings) crossing_bounds.push_back(bounds_of(c));
}

std::span<const HighwayDefaults> highway_defaults() { return kHighwayDefaults; }

std::optional<WayProfile> way_profile(
    const std::map<std::string, std::string>& tags) {
  const std::string highway = tag_or(tags, "highway");
  auto def = std::find_if(kHighwayDefaults.begin(), kHighwayDefaults.end(),
                          [&](const auto& d) { return d.highway == highway; });
  if (def == kHighwayDefaults.end()) return std::nullopt;

  WayProfile profile;
  profile.speed_limit = def->speed_limit;
  if (auto v = parse_speed(tag_or(tags, "maxspeed"))) profile.speed_limit = *v;

  const std::string oneway_tag = tag_or(tags, "oneway");
  bool oneway = def->implied_oneway;
  if (oneway_tag == "yes" || oneway_tag == "true" || oneway_tag == "1" ||
      oneway_tag == "-1") {
    oneway = true;
  } else if (oneway_tag == "no" || oneway_tag == "false" || oneway_tag == "0") {
    oneway = false;
  }

  const auto total = parse_number(tag_or(tags, "lanes"));
  const auto fwd_tag = parse_number(tag_or(tags, "lanes:forward"));
  const auto bwd_tag = parse_number(tag_or(tags, "lanes:backward"));
  if (oneway) {
    const int n = total ? std::max(1, static_cast<int>(*total))
                        : def->lanes_per_direction;
    profile.forward_lanes = n;
    profile.backward_lanes = 0;
  } else if (total) {
    const int n = std::max(2, static_cast<int>(*total));
    profile.forward_lanes =
        fwd_tag ? std::max(1, static_cast<int>(*fwd_tag)) : std::max(1, n / 2);
    profile.backward_lanes = bwd_tag ? std::max(1, static_cast<int>(*bwd_tag))
                                     : std::max(1, n - profile.forward_lanes);
  } else {
    profile.forward_lanes =
        fwd_tag ? std::max(1, static_cast<int>(*fwd_tag))
                : def->lanes_per_direction;
    profile.backward_lanes =
        bwd_tag ? std::max(1, static_cast<int>(*bwd_tag))
                : def->lanes_per_direction;
  }
  if (oneway_tag == "-1") std::swap(profile.forward_lanes, profile.backward_lanes);

  const int lane_total = profile.forward_lanes + profile.backward_lanes;
  if (auto w = parse_number(tag_or(tags, "width")); w && *w > 0) {
    profile.lane_width = *w / lane_total;
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Input formats

MapSkeleton parse_osm_skeleton(const std::string& osm_xml,
                               const GeoOrigin& origin) {
  origin.validate();
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(osm_xml);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed OSM XML: " + e.message(), e.line());
  }
  auto root = tree.get_child_optional("osm");
  if (!root) throw ParseError("missing <osm> root element");

  MapSkeleton skel;
  skel.origin = origin;
  for (const auto& [tag, child] : *root) {
    if (tag == "node") {
      const auto id = child.get<std::int64_t>("<xmlattr>.id");
      const auto lat = child.get<double>("<xmlattr>.lat");
      const auto lon = child.get<double>("<xmlattr>.lon");
      skel.nodes[id] = project_to_local(origin, lat, lon);
      for (const auto& [t, kv] : child) {
        if (t == "tag") {
          skel.node_tags[id][kv.get<std::string>("<xmlattr>.k")] =
              kv.get<std::string>("<xmlattr>.v");
        }
      }
    } else if (tag == "way") {
      MapSkeleton::Way way;
      way.id = child.get<std::int64_t>("<xmlattr>.id");
      for (const auto& [t, kv] : child) {
        if (t == "nd") {
          way.refs.push_back(kv.get<std::int64_t>("<xmlattr>.ref"));
        } else if (t == "tag") {
          way.tags[kv.get<std::string>("<xmlattr>.k")] =
              kv.get<std::string>("<xmlattr>.v");
        }
      }
      skel.ways.push_back(std::move(way));
    }
  }
  return skel;
}

MapSkeleton parse_map_fixture(const std::string& fixture_json) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(fixture_json);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed map fixture: ") + e.what());
  }
  auto require = [&](const json& obj, const char* key, json::value_t type,
                     const std::string& path) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw ValidationError(path + key, "missing required field");
    }
    const json& v = obj.at(key);
    const bool numeric = type == json::value_t::number_float;
    if (numeric ? !v.is_number() : v.type() != type) {
      throw ValidationError(path + key, "wrong type");
    }
    return v;
  };
  if (require(doc, "format", json::value_t::string, "") !=
      "arena-map-fixture") {
    throw ValidationError("format", "expected 'arena-map-fixture'");
  }
  if (require(doc, "version", json::value_t::number_unsigned, "") != 1) {
    throw ValidationError("version", "unsupported fixture version");
  }
  MapSkeleton skel;
  skel.name = require(doc, "name", json::value_t::string, "").get<std::string>();
  const json& origin = require(doc, "origin", json::value_t::object, "");
  skel.origin.latitude =
      require(origin, "lat", json::value_t::number_float, "origin.").get<double>();
  skel.origin.longitude =
      require(origin, "lon", json::value_t::number_float, "origin.").get<double>();
  skel.origin.validate();

  const json& nodes = require(doc, "nodes", json::value_t::array, "");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string path = "nodes[" + std::to_string(i) + "].";
    const auto& n = nodes[i];
    const auto id = require(n, "id", json::value_t::number_unsigned, path)
                        .get<std::int64_t>();
    skel.nodes[id] = {
        require(n, "x", json::value_t::number_float, path).get<double>(),
        require(n, "y", json::value_t::number_float, path).get<double>()};
    if (n.contains("tags")) {
      skel.node_tags[id] = n.at("tags").get<std::map<std::string, std::string>>();
    }
  }
  const json& ways = require(doc, "ways", json::value_t::array, "");
  for (std::size_t i = 0; i < ways.size(); ++i) {
    const std::string path = "ways[" + std::to_string(i) + "].";
    const auto& w = ways[i];
    MapSkeleton::Way way;
    way.id = require(w, "id", json::value_t::number_unsigned, path)
                 .get<std::int64_t>();
    way.refs = require(w, "nodes", json::value_t::array, path)
                   .get<std::vector<std::int64_t>>();
    way.tags = require(w, "tags", json::value_t::object, path)
                   .get<std::map<std::string, std::string>>();
    skel.ways.push_back(std::move(way));
  }
  if (doc.contains("routes")) {
    const json& routes = doc.at("routes");
    for (std::size_t i = 0; i < routes.size(); ++i) {
      const std::string path = "routes[" + std::to_string(i) + "].";
      const auto& r = routes[i];
      RouteSpec entry;
      entry.name = require(r, "name", json::value_t::string, path);
      const auto s = require(r, "start", json::value_t::array, path)
                         .get<std::array<double, 2>>();
      const auto g = require(r, "goal", json::value_t::array, path)
                         .get<std::array<double, 2>>();
      entry.start = {s[0], s[1]};
      entry.goal = {g[0], g[1]};
      skel.routes.push_back(entry);
    }
  }
  return skel;
}

std::vector<std::string> fixture_map_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : detail::embedded_map_fixtures()) {
    names.push_back(name);
  }
  return names;
}

const std::string& fixture_map_text(const std::string& name) {
  const auto& all = detail::embedded_map_fixtures();
  auto it = all.find(name);
  if (it == all.end()) throw ArenaError("unknown fixture map '" + name + "'");
  return it->second;
}

MapSkeleton load_map_skeleton(const std::string& source) {
  constexpr std::string_view kFixturePrefix = "fixture:";
  if (source.rfind(kFixturePrefix, 0) == 0) {
    return parse_map_fixture(
        fixture_map_text(source.substr(kFixturePrefix.size())));
  }
  std::ifstream in(source, std::ios::binary);
  if (!in) throw ArenaError("cannot read map file '" + source + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw EmptyMapError("map file '" + source + "' is empty");
  }
  const bool is_json = source.size() >= 5 &&
                       source.compare(source.size() - 5, 5, ".json") == 0;
  if (is_json) return parse_map_fixture(text);

  // OSM: anchor the local frame at the center of <bounds>, else first node.
  GeoOrigin origin;
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in2(text);
    pt::read_xml(in2, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed OSM XML: " + e.message(), e.line());
  }
  bool have_origin = false;
  if (auto root = tree.get_child_optional("osm")) {
    for (const auto& [tag, child] : *root) {
      if (tag == "bounds") {
        origin.latitude = 0.5 * (child.get<double>("<xmlattr>.minlat") +
                                 child.get<double>("<xmlattr>.maxlat"));
        origin.longitude = 0.5 * (child.get<double>("<xmlattr>.minlon") +
                                  child.get<double>("<xmlattr>.maxlon"));
        have_origin = true;
        break;
      }
      if (tag == "node" && !have_origin) {
        origin.latitude = child.get<double>("<xmlattr>.lat");
        origin.longitude = child.get<double>("<xmlattr>.lon");
        have_origin = true;
      }
    }
  }
  MapSkeleton skel = parse_osm_skeleton(text, origin);
  skel.name = source;
  return skel;
}

// ---------------------------------------------------------------------------
// Lane graph construction

namespace {

struct Segment {
  std::int64_t way = 0;
  int index = 0;
  std::int64_t from_node = 0;
  std::int64_t to_node = 0;
  Polyline full;     // untrimmed node polyline
  Polyline trimmed;  // after junction trimming
  WayProfile profile;
  std::vector<std::string> forward;   // lane ids, leftmost first
  std::vector<std::string> backward;  // lane ids, leftmost first

  double half_width() const {
    return 0.5 * profile.lane_width *
           (profile.forward_lanes + profile.backward_lanes);
  }
};

struct SegmentEnd {
  std::size_t segment = 0;
  bool at_start = false;  // true if the node is the segment's from_node
};

std::string lane_id(const Segment& seg, bool forward, int i) {
  return "w" + std::to_string(seg.way) + "_s" + std::to_string(seg.index) +
         (forward ? "_f" : "_b") + std::to_string(i);
}

Polygon strip_polygon(const Polyline& line, double half_width) {
  Polygon poly = offset_polyline(line, half_width);
  Polyline right = offset_polyline(line, -half_width);
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return poly;
}

Polygon oriented_rect(const Vec2& c, double heading, double along,
                      double across) {
  OrientedBox box{c, heading, along, across};
  const auto k = box.corners();
  return {k.begin(), k.end()};
}

double heading_of(const Vec2& a, const Vec2& b) {
  return std::atan2(b.y - a.y, b.x - a.x);
}

/// Replaces sharp interior vertices with Hermite fillets so lanes stay
/// drivable. Fillet length follows the degree-2 junction trim rule.
Polyline round_corners(const Polyline& poly) {
  if (poly.size() < 3) return poly;
  Polyline out{poly.front()};
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i - 1];
    const Vec2 b = poly[i];
    const Vec2 c = poly[i + 1];
    const double h_in = heading_of(a, b);
    const double h_out = heading_of(b, c);
    const double bend = std::abs(wrap_angle(h_out - h_in));
    if (bend < 10.0 * std::numbers::pi / 180.0) {
      out.push_back(b);
      continue;
    }
    double d = 2.0 + 8.0 * std::min(1.0, bend / (0.5 * std::numbers::pi));
    d = std::min({d, 0.45 * (b - a).norm(), 0.45 * (c - b).norm()});
    const Vec2 p0 = b - heading_vector(h_in) * d;
    const Vec2 p1 = b + heading_vector(h_out) * d;
    const Polyline fillet =
        hermite_curve({p0.x, p0.y, h_in}, {p1.x, p1.y, h_out}, kSamplingStep);
    out.insert(out.end(), fillet.begin(), fillet.end());
  }
  out.push_back(poly.back());
  return dedupe(out);
}

}  // namespace

RoadGraph build_road_graph(const MapSkeleton& skel) {
  RoadGraph graph;
  graph.origin = skel.origin;
  graph.name = skel.name;

  // Road ways and reference checks.
  std::vector<const MapSkeleton::Way*> roads;
  std::vector<std::string> dangling;
  for (const auto& way : skel.ways) {
    std::vector<std::string> missing;
    for (auto ref : way.refs) {
      if (!skel.nodes.contains(ref)) missing.push_back(std::to_string(ref));
    }
    if (!missing.empty()) {
      dangling.push_back("way " + std::to_string(way.id) + " -> node(s) " +
                         [&] {
                           std::string s;
                           for (const auto& m : missing) {
                             s += (s.empty() ? "" : ",") + m;
                           }
                           return s;
                         }());
      continue;
    }
    if (way_profile(way.tags)) roads.push_back(&way);
  }
  if (!dangling.empty()) {
    std::string what = "unresolved node references: ";
    for (std::size_t i = 0; i < dangling.size(); ++i) {
      what += (i ? "; " : "") + dangling[i];
    }
    throw TopologyError(what, dangling);
  }
  if (roads.empty()) throw EmptyMapError("map contains no road ways");

  // Split ways at shared nodes.
  std::map<std::int64_t, int> usage;
  for (const auto* way : roads) {
    std::vector<std::int64_t> refs;
    for (auto r : way->refs) {
      if (refs.empty() || refs.back() != r) refs.push_back(r);
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
      usage[refs[i]] += (i == 0 || i + 1 == refs.size()) ? 1 : 2;
    }
  }
  std::vector<Segment> segments;
  for (const auto* way : roads) {
    std::vector<std::int64_t> refs;
    for (auto r : way->refs) {
      if (refs.empty() || refs.back() != r) refs.push_back(r);
    }
    if (refs.size() < 2) continue;
    const WayProfile profile = *way_profile(way->tags);
    int index = 0;
    std::vector<std::int64_t> run{refs.front()};
    for (std::size_t i = 1; i < refs.size(); ++i) {
      run.push_back(refs[i]);
      const bool split = i + 1 == refs.size() || usage[refs[i]] > 2;
      if (!split) continue;
      Segment seg;
      seg.way = way->id;
      seg.index = index++;
      seg.from_node = run.front();
      seg.to_node = run.back();
      seg.profile = profile;
      for (auto r : run) seg.full.push_back(skel.nodes.at(r));
      seg.full = dedupe(seg.full);
      if (seg.full.size() >= 2) segments.push_back(std::move(seg));
      run = {refs[i]};
    }
  }
  graph.road_count = roads.size();

  // Junction trimming.
  std::map<std::int64_t, std::vector<SegmentEnd>> ends;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    ends[segments[i].from_node].push_back({i, true});
    ends[segments[i].to_node].push_back({i, false});
  }
  std::vector<std::array<double, 2>> trims(segments.size(), {0.0, 0.0});
  for (const auto& [node, list] : ends) {
    if (list.size() < 2) continue;
    double trim = 0.0;
    if (list.size() == 2) {
      auto dir = [&](const SegmentEnd& e) {
        const auto& f = segments[e.segment].full;
        return e.at_start ? heading_of(f[0], f[1])
                          : heading_of(f[f.size() - 1], f[f.size() - 2]);
      };
      // Angle between the two outward directions; pi means straight through.
      const double bend =
          std::numbers::pi - std::abs(wrap_angle(dir(list[0]) - dir(list[1])));
      trim = 2.0 + 8.0 * std::min(1.0, bend / (0.5 * std::numbers::pi));
    } else {
      double hw = 0.0;
      for (const auto& e : list) hw = std::max(hw, segments[e.segment].half_width());
      trim = std::max(8.0, hw + 5.0);
    }
    for (const auto& e : list) trims[e.segment][e.at_start ? 0 : 1] = trim;
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto& seg = segments[i];
    const auto cum = cumulative_length(seg.full);
    const double len = cum.back();
    const double a = std::min(trims[i][0], 0.45 * len);
    const double b = std::min(trims[i][1], 0.45 * len);
    seg.trimmed = round_corners(dedupe(sub_polyline(seg.full, cum, a, len - b)));
  }

  // Lanes.
  for (auto& seg : segments) {
    const auto& p = seg.profile;
    const bool two_way = p.forward_lanes > 0 && p.backward_lanes > 0;
    const double w = p.lane_width;
    auto make = [&](bool forward, int i, double offset) {
      Lane lane;
      lane.id = lane_id(seg, forward, i);
      Polyline line = offset_polyline(seg.trimmed, offset);
      if (!forward) std::reverse(line.begin(), line.end());
      lane.centerline = resample(line, kSamplingStep);
      lane.cum = cumulative_length(lane.centerline);
      lane.width = w;
      lane.speed_limit = p.speed_limit;
      lane.way_id = seg.way;
      graph.lanes[lane.id] = std::move(lane);
      (forward ? seg.forward : seg.backward).push_back(lane_id(seg, forward, i));
    };
    // Offsets are relative to the way direction, positive to the left.
    for (int i = 0; i < p.forward_lanes; ++i) {
      const double off = two_way ? -(i + 0.5) * w
                                 : (0.5 * (p.forward_lanes - 1) - i) * w;
      make(true, i, off);
    }
    for (int i = 0; i < p.backward_lanes; ++i) {
      const double off = two_way ? (i + 0.5) * w
                                 : -(0.5 * (p.backward_lanes - 1) - i) * w;
      make(false, i, off);
    }
    auto link_neighbors = [&](const std::vector<std::string>& ids) {
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        graph.lanes[ids[i]].right_neighbor = ids[i + 1];
        graph.lanes[ids[i + 1]].left_neighbor = ids[i];
      }
    };
    link_neighbors(seg.forward);
    link_neighbors(seg.backward);

    // Semantic lines: road edges and dividers, both along the way direction.
    const int total = p.forward_lanes + p.backward_lanes;
    const double left_edge = two_way ? p.backward_lanes * w : 0.5 * total * w;
    for (int k = 0; k <= total; ++k) {
      const double off = left_edge - k * w;
      const MapLayer cat = (k == 0 || k == total) ? MapLayer::kLaneBoundary
                                                  : MapLayer::kLaneDivider;
      graph.dividers.push_back(
          {cat, resample(offset_polyline(seg.trimmed, off), kSamplingStep)});
    }
  }

  // Junction connectors.
  for (const auto& [node, list] : ends) {
    if (list.size() < 2) continue;
    Junction junction;
    junction.id = "n" + std::to_string(node);
    junction.center = skel.nodes.at(node);
    struct Approach {
      std::size_t end_index;
      std::vector<std::string> lanes;  // leftmost first
    };
    std::vector<Approach> in;
    std::vector<Approach> out;
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& seg = segments[list[k].segment];
      if (list[k].at_start) {
        if (!seg.forward.empty()) out.push_back({k, seg.forward});
        if (!seg.backward.empty()) in.push_back({k, seg.backward});
      } else {
        if (!seg.forward.empty()) in.push_back({k, seg.forward});
        if (!seg.backward.empty()) out.push_back({k, seg.backward});
      }
    }
    std::vector<Vec2> hull_points{junction.center};
    int counter = 0;
    for (const auto& a : in) {
      for (const auto& id : a.lanes) {
        junction.incoming.push_back(id);
        const auto& l = graph.lanes.at(id);
        const Pose2 e = l.pose(l.length());
        const Vec2 n{-std::sin(e.yaw), std::cos(e.yaw)};
        hull_points.push_back(e.position() + n * (0.5 * l.width));
        hull_points.push_back(e.position() - n * (0.5 * l.width));
      }
    }
    for (const auto& b : out) {
      for (const auto& id : b.lanes) {
        junction.outgoing.push_back(id);
        const auto& l = graph.lanes.at(id);
        const Pose2 s = l.pose(0.0);
        const Vec2 n{-std::sin(s.yaw), std::cos(s.yaw)};
        hull_points.push_back(s.position() + n * (0.5 * l.width));
        hull_points.push_back(s.position() - n * (0.5 * l.width));
      }
    }
    for (const auto& a : in) {
      for (const auto& b : out) {
        if (a.end_index == b.end_index && list.size() > 1) continue;  // U-turn
        const auto& first_in = graph.lanes.at(a.lanes.front());
        const auto& first_out = graph.lanes.at(b.lanes.front());
        const double turn = wrap_angle(first_out.heading(0.0) -
                                       first_in.heading(first_in.length()));
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        const std::size_t nin = a.lanes.size();
        const std::size_t nout = b.lanes.size();
        constexpr double kTurn = 30.0 * kDegToRad;
        if (list.size() > 2 && turn > kTurn) {
          pairs.push_back({0, 0});
        } else if (list.size() > 2 && turn < -kTurn) {
          pairs.push_back({nin - 1, nout - 1});
        } else {
          for (std::size_t i = 0; i < nin; ++i) {
            pairs.push_back({i, std::min(i, nout - 1)});
          }
        }
        for (auto [i, o] : pairs) {
          auto& from = graph.lanes.at(a.lanes[i]);
          auto& to = graph.lanes.at(b.lanes[o]);
          Lane c;
          c.id = junction.id + "_c" + std::to_string(counter++);
          c.connector = true;
          c.width = from.width;
          c.speed_limit = std::min(from.speed_limit, to.speed_limit);
          c.centerline = hermite_curve(from.pose(from.length()), to.pose(0.0),
                                       kSamplingStep);
          c.cum = cumulative_length(c.centerline);
          if (const double k = peak_curvature(c.centerline, c.cum); k > 1e-6) {
            c.speed_limit =
                std::min(c.speed_limit, std::sqrt(kConnectorLateralAccel / k));
          }
          c.predecessors = {from.id};
          c.successors = {to.id};
          from.successors.push_back(c.id);
          to.predecessors.push_back(c.id);
          junction.connectors.push_back(c.id);
          graph.lanes[c.id] = std::move(c);
        }
      }
    }
    if (list.size() > 2) junction.area = convex_hull(hull_points);
    // Conflicts between connectors fed by different incoming lanes.
    constexpr double kConflictDistance = 2.6;
    for (std::size_t i = 0; i < junction.connectors.size(); ++i) {
      for (std::size_t k = i + 1; k < junction.connectors.size(); ++k) {
        const Lane& a = graph.lanes.at(junction.connectors[i]);
        const Lane& b = graph.lanes.at(junction.connectors[k]);
        if (a.predecessors == b.predecessors) continue;
        std::optional<std::pair<double, double>> hit;
        for (std::size_t m = 0; m < a.centerline.size() && !hit; ++m) {
          for (std::size_t n = 0; n < b.centerline.size(); ++n) {
            if ((a.centerline[m] - b.centerline[n]).norm() < kConflictDistance) {
              hit = {a.cum[m], b.cum[n]};
              break;
            }
          }
        }
        if (!hit) continue;
        graph.conflicts[a.id].push_back({b.id, hit->first, hit->second});
        graph.conflicts[b.id].push_back({a.id, hit->second, hit->first});
      }
    }
    graph.junctions.push_back(std::move(junction));
  }

  // Drivable area: lane strips plus junction hulls.
  for (const auto& [id, lane] : graph.lanes) {
    graph.drivable_area.push_back(strip_polygon(lane.centerline, 0.5 * lane.width));
  }
  for (const auto& j : graph.junctions) {
    if (j.area.size() >= 3) graph.drivable_area.push_back(j.area);
  }

  // Pedestrian crossings: tagged nodes on roads, and crossing footways.
  for (const auto& [node, tags] : skel.node_tags) {
    if (tag_or(tags, "highway") != "crossing") continue;
    for (const auto& seg : segments) {
      const Vec2 p = skel.nodes.at(node);
      const auto proj = project_onto(seg.full, p);
      if (proj.distance > 1e-6) continue;
      const auto cum = cumulative_length(seg.full);
      const double h = heading_at(seg.full, cum, proj.s);
      const auto& sp = seg.profile;
      const bool two_way = sp.forward_lanes > 0 && sp.backward_lanes > 0;
      const double off =
          two_way ? 0.5 * sp.lane_width * (sp.backward_lanes - sp.forward_lanes)
                  : 0.0;
      const Vec2 n{-std::sin(h), std::cos(h)};
      graph.crossings.push_back(oriented_rect(p + n * off, h, 3.0,
                                              2.0 * seg.half_width() + 0.5));
      break;
    }
  }
  for (const auto& way : skel.ways) {
    if (tag_or(way.tags, "footway") != "crossing") continue;
    Polyline line;
    for (auto r : way.refs) line.push_back(skel.nodes.at(r));
    line = dedupe(line);
    if (line.size() >= 2) graph.crossings.push_back(strip_polygon(line, 1.5));
  }

  graph.finalize();
  return graph;
}

RoadGraph parse_osm(const std::string& osm_xml, const GeoOrigin& origin) {
  return build_road_graph(parse_osm_skeleton(osm_xml, origin));
}

// ---------------------------------------------------------------------------
// Routing

std::optional<LaneSnap> snap_to_lane(const RoadGraph& graph, const Vec2& p,
                                     double max_distance) {
  std::optional<LaneSnap> best;
  for (const auto& [id, lane] : graph.lanes) {
    const Rect& b = graph.lane_bounds.at(id);
    if (p.x < b.min_x - max_distance || p.x > b.max_x + max_distance ||
        p.y < b.min_y - max_distance || p.y > b.max_y + max_distance) {
      continue;
    }
    const auto proj = lane.project(p);
    if (proj.distance > max_distance) continue;
    if (!best || proj.distance < best->distance) {
      best = LaneSnap{id, proj.s, proj.distance};
    }
  }
  return best;
}

Route route_from_sequence(const RoadGraph& graph,
                          const std::vector<std::string>& lanes, double entry,
                          double exit) {
  Route route;
  route.lane_sequence = lanes;
  double s = entry;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const Lane& lane = graph.lane(lanes[i]);
    const bool last = i + 1 == lanes.size();
    double leave = lane.length();
    double next_entry = 0.0;
    if (last) {
      leave = exit;
    } else {
      const Lane& next = graph.lane(lanes[i + 1]);
      const bool neighbor = lane.left_neighbor == next.id ||
                            lane.right_neighbor == next.id;
      if (neighbor) {
        leave = s;
        next_entry = next.project(lane.point(s)).s;
      }
    }
    const Polyline piece = sub_polyline(lane.centerline, lane.cum, s, leave);
    for (const auto& p : piece) {
      if (route.reference_path.empty() ||
          !(route.reference_path.back() == p)) {
        route.reference_path.push_back(p);
      }
    }
    s = next_entry;
  }
  if (route.reference_path.size() == 1) {
    route.reference_path.push_back(route.reference_path.front());
  }
  route.cum = cumulative_length(route.reference_path);
  route.total_length = route.cum.back();
  return route;
}

Route plan_route(const RoadGraph& graph, const Vec2& start, const Vec2& goal) {
  const auto from = snap_to_lane(graph, start);
  if (!from) throw SnapError("route start is farther than 10 m from any lane");
  const auto to = snap_to_lane(graph, goal);
  if (!to) throw SnapError("route goal is farther than 10 m from any lane");

  // Search state: lane, entry arclength and the direction of the lateral
  // hop that led here (0 none, 1 left, 2 right) so hops never reverse.
  struct State {
    std::string lane;
    double entry = 0.0;
    int hop = 0;
    auto key() const {
      return std::tuple{lane, std::llround(entry * 1e6), hop};
    }
  };
  struct Entry {
    double cost;
    std::size_t index;
    bool operator>(const Entry& o) const {
      return cost > o.cost || (cost == o.cost && index > o.index);
    }
  };
  std::vector<State> states;
  std::vector<std::optional<std::size_t>> parent;
  std::vector<double> best_cost;
  std::map<std::tuple<std::string, long long, int>, std::size_t> seen;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  auto push = [&](State st, double cost, std::optional<std::size_t> par) {
    auto k = st.key();
    auto it = seen.find(k);
    if (it != seen.end()) {
      if (best_cost[it->second] <= cost) return;
      best_cost[it->second] = cost;
      parent[it->second] = par;
      open.push({cost, it->second});
      return;
    }
    states.push_back(std::move(st));
    parent.push_back(par);
    best_cost.push_back(cost);
    seen[k] = states.size() - 1;
    open.push({cost, states.size() - 1});
  };
  // The goal is a pseudo-state marked with an empty lane id.
  constexpr double kEps = 1e-9;
  push({from->lane_id, from->s, 0}, 0.0, std::nullopt);
  std::optional<std::size_t> goal_state;
  std::set<std::size_t> closed;
  while (!open.empty()) {
    const Entry top = open.top();
    open.pop();
    if (top.cost > best_cost[top.index] || closed.contains(top.index)) continue;
    closed.insert(top.index);
    const State st = states[top.index];
    if (st.lane.empty()) {
      goal_state = top.index;
      break;
    }
    const Lane& lane = graph.lane(st.lane);
    if (st.lane == to->lane_id && to->s >= st.entry - kEps) {
      push({"", std::max(to->s, st.entry), 0}, top.cost + std::max(0.0, to->s - st.entry),
           top.index);
    }
    for (const auto& succ : lane.successors) {
      const Lane& next = graph.lane(succ);
      const double gap = (next.centerline.front() - lane.centerline.back()).norm();
      push({succ, 0.0, 0}, top.cost + (lane.length() - st.entry) + gap,
           top.index);
    }
    auto hop = [&](const std::optional<std::string>& nb, int dir) {
      if (!nb || (st.hop != 0 && st.hop != dir)) return;
      const Lane& next = graph.lane(*nb);
      const Vec2 p = lane.point(st.entry);
      const auto proj = next.project(p);
      push({*nb, proj.s, dir}, top.cost + (proj.foot - p).norm(), top.index);
    };
    hop(lane.left_neighbor, 1);
    hop(lane.right_neighbor, 2);
  }
  if (!goal_state) {
    throw UnreachableError("no lane path from '" + from->lane_id + "' to '" +
                           to->lane_id + "'");
  }
  std::vector<std::string> chain;
  for (auto i = parent[*goal_state]; i; i = parent[*i]) {
    chain.push_back(states[*i].lane);
  }
  std::reverse(chain.begin(), chain.end());
  const double goal_s = states[*goal_state].entry;
  return route_from_sequence(graph, chain, from->s, goal_s);
}

// ---------------------------------------------------------------------------
// Local layout

LayoutSlice query_local_layout(const RoadGraph& graph, const Pose2& center,
                               double radius) {
  LayoutSlice slice;
  if (!(radius > 0.0)) return slice;
  const Rect window{-radius, -radius, radius, radius};
  const double reach = radius * std::numbers::sqrt2;
  const Rect world{center.x - reach, center.y - reach, center.x + reach,
                   center.y + reach};
  auto local = [&](std::span<const Vec2> pts) {
    Polyline out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(to_local(center, p));
    return out;
  };
  for (const auto& [id, lane] : graph.lanes) {
    if (!graph.lane_bounds.at(id).intersects(world)) continue;
    for (auto& piece : clip_polyline(local(lane.centerline), window)) {
      slice.lanes.push_back({id, std::move(piece)});
    }
  }
  for (std::size_t i = 0; i < graph.dividers.size(); ++i) {
    if (!graph.divider_bounds[i].intersects(world)) continue;
    for (auto& piece : clip_polyline(local(graph.dividers[i].points), window)) {
      slice.dividers.push_back({graph.dividers[i].category, std::move(piece)});
    }
  }
  for (std::size_t i = 0; i < graph.crossings.size(); ++i) {
    if (!graph.crossing_bounds[i].intersects(world)) continue;
    auto poly = clip_polygon(local(graph.crossings[i]), window);
    if (!poly.empty()) slice.crossings.push_back(std::move(poly));
  }
  for (std::size_t i = 0; i < graph.drivable_area.size(); ++i) {
    if (!graph.drivable_bounds[i].intersects(world)) continue;
    auto poly = clip_polygon(local(graph.drivable_area[i]), window);
    if (!poly.empty()) slice.drivable_area.push_back(std::move(poly));
  }
  return slice;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<GraphIssue> validate_graph(const RoadGraph& graph) {
  std::vector<GraphIssue> issues;
  auto report = [&](std::string kind, std::string detail) {
    issues.push_back({std::move(kind), std::move(detail)});
  };
  if (graph.lanes.empty()) report("empty", "graph has no lanes");
  for (const auto& [id, lane] : graph.lanes) {
    if (lane.centerline.size() < 2) report("centerline", id + " has < 2 points");
    for (std::size_t i = 1; i < lane.centerline.size(); ++i) {
      if (lane.centerline[i] == lane.centerline[i - 1]) {
        report("centerline", id + " repeats a point");
        break;
      }
    }
    if (!(lane.width > 0)) report("width", id + " has nonpositive width");
    auto check_refs = [&](const std::vector<std::string>& refs, const char* what) {
      for (const auto& r : refs) {
        if (!graph.lanes.contains(r)) report("reference", id + " " + what + " " + r);
      }
    };
    check_refs(lane.successors, "successor");
    check_refs(lane.predecessors, "predecessor");
    for (const auto* nb : {&lane.left_neighbor, &lane.right_neighbor}) {
      if (*nb && !graph.lanes.contains(**nb)) report("reference", id + " neighbor " + **nb);
    }
    for (const auto& succ : lane.successors) {
      auto it = graph.lanes.find(succ);
      if (it == graph.lanes.end() || it->second.centerline.empty()) continue;
      const double gap = (it->second.centerline.front() - lane.centerline.back()).norm();
      if (gap > 0.5) {
        report("closure", id + " -> " + succ + " gap " + std::to_string(gap) + " m");
      }
    }
    for (const auto& p : lane.centerline) {
      if (!graph.in_drivable_area(p, 0.1)) {
        report("drivable", id + " leaves the drivable area");
        break;
      }
    }
  }
  return issues;
}

}  // namespace arena
