#include "arena/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "arena/errors.hpp"
#include "json_util.hpp"

namespace arena {

using detail::json;

void SimulationConfig::validate() const {
  if (map.empty()) throw ValidationError("map", "must name a fixture or a file");
  if (route.name.empty() && !(route.start && route.goal)) {
    throw ValidationError("route", "needs a name or both start and goal");
  }
  if (route.start.has_value() != route.goal.has_value()) {
    throw ValidationError("route", "start and goal go together");
  }
  traffic.validate();
  if (!(rig.focal > 0.0) || !std::isfinite(rig.focal)) {
    throw ValidationError("rig.focal", "must be positive");
  }
  if (!(rig.mount_height > 0.0) || !std::isfinite(rig.mount_height)) {
    throw ValidationError("rig.mount_height", "must be positive");
  }
  dreamer.validate();
  if (dreamer.kind == RendererKind::kReplay) {
    throw ValidationError("dreamer.kind", "replay is selected by `arena replay`");
  }
  agent.validate();
  if (!(time_limit > 0.0) || !std::isfinite(time_limit)) {
    throw ValidationError("time_limit", "must be positive");
  }
  eval.validate();
  if (!(layout_radius > 0.0) || !std::isfinite(layout_radius)) {
    throw ValidationError("layout_radius", "must be positive");
  }
  if (!(bev.extent > 0.0) || !(bev.resolution > 0.0) ||
      !std::isfinite(bev.extent / bev.resolution)) {
    throw ValidationError("bev", "extent and resolution must be positive");
  }
  if (embedding_bands < 1 || embedding_bands > 32) {
    throw ValidationError("embedding_bands", "must lie in [1, 32]");
  }
}

// ---------------------------------------------------------------------------
// Writing

namespace {

json point_json(const std::optional<Vec2>& p) {
  return p ? json::array({p->x, p->y}) : json(nullptr);
}

json to_json(const SimulationConfig& c) {
  const auto& idm = c.traffic.idm;
  const auto& tw = c.traffic.trajectory_weights;
  return json{
      {"map", c.map},
      {"route",
       {{"name", c.route.name},
        {"start", point_json(c.route.start)},
        {"goal", point_json(c.route.goal)}}},
      {"traffic",
       {{"cooperation_factor", c.traffic.cooperation_factor},
        {"spawn_density", c.traffic.spawn_density},
        {"trajectory_weights",
         {{"efficiency", tw.efficiency},
          {"comfort", tw.comfort},
          {"safety", tw.safety}}},
        {"idm",
         {{"desired_speed", idm.desired_speed},
          {"time_headway", idm.time_headway},
          {"min_gap", idm.min_gap},
          {"max_accel", idm.max_accel},
          {"comfort_decel", idm.comfort_decel}}}}},
      {"rig", {{"focal", c.rig.focal}, {"mount_height", c.rig.mount_height}}},
      {"dreamer",
       {{"kind", std::string(to_string(c.dreamer.kind))},
        {"endpoint", c.dreamer.endpoint},
        {"timeout_ms", c.dreamer.timeout_ms}}},
      {"agent",
       {{"kind", std::string(to_string(c.agent.kind))},
        {"endpoint", c.agent.endpoint},
        {"timeout_ms", c.agent.timeout_ms},
        {"replay_log", c.agent.replay_log}}},
      {"mode", std::string(to_string(c.mode))},
      {"time_limit", c.time_limit},
      {"eval", detail::eval_config_json(c.eval)},
      {"prompt", c.prompt},
      {"seed", c.seed},
      {"layout_radius", c.layout_radius},
      {"bev", {{"extent", c.bev.extent}, {"resolution", c.bev.resolution}}},
      {"embedding_bands", c.embedding_bands},
  };
}

// ---------------------------------------------------------------------------
// Reading

/// Walks a JSON object against the default document: every key must exist
/// in the defaults and have a compatible type.
void check_schema(const json& value, const json& schema, const std::string& path) {
  if (schema.is_object()) {
    if (!value.is_object()) throw ValidationError(path, "expected an object");
    for (const auto& [key, v] : value.items()) {
      const std::string sub = path.empty() ? key : path + "." + key;
      if (!schema.contains(key)) throw ValidationError(sub, "unknown key");
      check_schema(v, schema.at(key), sub);
    }
    return;
  }
  if (schema.is_number_unsigned()) {
    if (!value.is_number_unsigned()) {
      throw ValidationError(path, "expected a nonnegative integer");
    }
  } else if (schema.is_number_integer()) {
    if (!value.is_number_integer()) throw ValidationError(path, "expected an integer");
  } else if (schema.is_number()) {
    if (!value.is_number()) throw ValidationError(path, "expected a number");
  } else if (schema.is_string()) {
    if (!value.is_string()) throw ValidationError(path, "expected a string");
  } else if (schema.is_boolean()) {
    if (!value.is_boolean()) throw ValidationError(path, "expected a boolean");
  }
  // Null schema entries (route points) accept null or [x, y].
  if (schema.is_null() && !value.is_null()) {
    if (!value.is_array() || value.size() != 2 || !value[0].is_number() ||
        !value[1].is_number()) {
      throw ValidationError(path, "expected [x, y] or null");
    }
  }
}

std::optional<Vec2> point_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return Vec2{j[0].get<double>(), j[1].get<double>()};
}

SimulationConfig from_json(const json& j) {
  SimulationConfig c;
  c.map = j.at("map").get<std::string>();
  const auto& r = j.at("route");
  c.route = {r.at("name").get<std::string>(), point_from(r.at("start")),
             point_from(r.at("goal"))};
  const auto& t = j.at("traffic");
  c.traffic.cooperation_factor = t.at("cooperation_factor").get<double>();
  c.traffic.spawn_density = t.at("spawn_density").get<double>();
  const auto& tw = t.at("trajectory_weights");
  c.traffic.trajectory_weights = {tw.at("efficiency").get<double>(),
                                  tw.at("comfort").get<double>(),
                                  tw.at("safety").get<double>()};
  const auto& idm = t.at("idm");
  c.traffic.idm = {idm.at("desired_speed").get<double>(),
                   idm.at("time_headway").get<double>(),
                   idm.at("min_gap").get<double>(),
                   idm.at("max_accel").get<double>(),
                   idm.at("comfort_decel").get<double>()};
  c.rig = {j.at("rig").at("focal").get<double>(),
           j.at("rig").at("mount_height").get<double>()};
  const auto& d = j.at("dreamer");
  c.dreamer.kind = renderer_kind_from_string(d.at("kind").get<std::string>());
  c.dreamer.endpoint = d.at("endpoint").get<std::string>();
  c.dreamer.timeout_ms = d.at("timeout_ms").get<int>();
  const auto& a = j.at("agent");
  c.agent.kind = agent_kind_from_string(a.at("kind").get<std::string>());
  c.agent.endpoint = a.at("endpoint").get<std::string>();
  c.agent.timeout_ms = a.at("timeout_ms").get<int>();
  c.agent.replay_log = a.at("replay_log").get<std::string>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "open_loop" && mode != "closed_loop") {
    throw ValidationError("mode", "expected open_loop or closed_loop");
  }
  c.mode = ego_mode_from_string(mode);
  c.time_limit = j.at("time_limit").get<double>();
  c.eval = detail::eval_config_from(j.at("eval"));
  c.prompt = j.at("prompt").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.layout_radius = j.at("layout_radius").get<double>();
  c.bev = {j.at("bev").at("extent").get<double>(),
           j.at("bev").at("resolution").get<double>()};
  c.embedding_bands = j.at("embedding_bands").get<int>();
  return c;
}

SimulationConfig config_from_document(const json& doc) {
  const json defaults = to_json(SimulationConfig{});
  check_schema(doc, defaults, "");
  json merged = defaults;
  merged.merge_patch(doc);
  // A named route replaces default points and vice versa.
  if (doc.contains("route") && doc["route"].is_object()) {
    const auto& r = doc["route"];
    if ((r.contains("start") || r.contains("goal")) && !r.contains("name")) {
      merged["route"]["name"] = "";
    }
  }
  // merge_patch drops keys set to null; restore them.
  for (const char* k : {"start", "goal"}) {
    if (!merged["route"].contains(k)) merged["route"][k] = nullptr;
  }
  SimulationConfig c = from_json(merged);
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const SimulationConfig& config, int indent) {
  return to_json(config).dump(indent);
}

SimulationConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("", std::string("not valid JSON: ") + e.what());
  }
  return config_from_document(doc);
}

SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArenaError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_hash(const SimulationConfig& config) {
  return sha256_hex(to_json(config).dump());
}

RendererBinding parse_dreamer_flag(const std::string& value) {
  RendererBinding b;
  if (value.rfind("http://", 0) == 0) {
    b.kind = RendererKind::kRemote;
    b.endpoint = value;
  } else {
    b.kind = renderer_kind_from_string(value);
  }
  return b;
}

AgentBinding parse_agent_flag(const std::string& value) {
  AgentBinding b;
  if (value.rfind("http://", 0) == 0) {
    b.kind = AgentKind::kRemote;
    b.endpoint = value;
  } else {
    b.kind = agent_kind_from_string(value);
  }
  return b;
}

SuiteSpec parse_suite(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("", std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("routes") || !doc["routes"].is_array()) {
    throw ValidationError("routes", "expected a list of routes");
  }
  for (const auto& [key, v] : doc.items()) {
    if (key != "base" && key != "routes" && key != "report") {
      throw ValidationError(key, "unknown key");
    }
  }
  const json base = doc.value("base", json::object());
  SuiteSpec suite;
  suite.report_path = doc.value("report", std::string());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc["routes"].size(); ++i) {
    const auto& entry = doc["routes"][i];
    const std::string field = "routes[" + std::to_string(i) + "]";
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw ValidationError(field + ".name", "expected a route name");
    }
    const std::string name = entry["name"].get<std::string>();
    if (!seen.insert(name).second) {
      throw ValidationError(field + ".name", "duplicate route '" + name + "'");
    }
    json merged = base;
    merged.merge_patch(entry.value("overrides", json::object()));
    if (!merged.contains("route")) merged["route"] = json{{"name", name}};
    suite.entries.push_back({name, config_from_document(merged)});
  }
  return suite;
}

SuiteSpec default_suite(const SimulationConfig& base) {
  static const std::array<std::pair<const char*, const char*>, 4> kRoutes{{
      {"sing_route_1", "fixture:singapore-onenorth"},
      {"sing_route_2", "fixture:singapore-onenorth"},
      {"boston_route_1", "fixture:boston-seaport"},
      {"boston_route_2", "fixture:boston-thomaspark"},
  }};
  SuiteSpec suite;
  for (const auto& [route, map] : kRoutes) {
    SimulationConfig c = base;
    c.map = map;
    c.route = {route, std::nullopt, std::nullopt};
    suite.entries.push_back({route, c});
  }
  return suite;
}

}  // namespace arena
