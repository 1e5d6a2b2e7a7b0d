#include "arena/episode_log.hpp"

#include <fstream>
#include <sstream>

#include "arena/errors.hpp"
#include "json_util.hpp"

#ifndef ARENA_VERSION
#define ARENA_VERSION "0.0.0"
#endif

namespace arena {

using detail::json;

std::string image_set_hash(const std::vector<std::string>& image_hashes) {
  if (image_hashes.empty()) return {};
  std::string joined;
  for (std::size_t i = 0; i < image_hashes.size(); ++i) {
    if (i) joined += ',';
    joined += image_hashes[i];
  }
  return sha256_hex(joined);
}

FrameRecord frame_record(const WorldState& world) {
  FrameRecord r;
  r.tick = world.tick;
  r.time = world.sim_time;
  auto add = [&](const VehicleState& v) {
    r.vehicles.push_back({v.id, v.pose, v.speed, v.accel, v.lane_id,
                          v.footprint.length, v.footprint.width});
  };
  add(world.ego());
  for (const auto& [id, v] : world.vehicles) {
    if (v.role != VehicleRole::kEgo) add(v);
  }
  r.collisions = world.collisions;
  return r;
}

// ---------------------------------------------------------------------------
// Record bodies

namespace {

json poses_json(const std::vector<Pose2>& poses) {
  json out = json::array();
  for (const auto& p : poses) out.push_back(json::array({p.x, p.y, p.yaw}));
  return out;
}

std::vector<Pose2> poses_from(const json& j) {
  std::vector<Pose2> out;
  for (const auto& p : j) {
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  return out;
}

json frame_json(const FrameRecord& r) {
  json vehicles = json::array();
  for (const auto& v : r.vehicles) {
    vehicles.push_back({{"id", v.id},
                        {"pose", json::array({v.pose.x, v.pose.y, v.pose.yaw})},
                        {"speed", v.speed},
                        {"accel", v.accel},
                        {"lane", v.lane},
                        {"size", json::array({v.length, v.width})}});
  }
  json collisions = json::array();
  for (const auto& c : r.collisions) {
    collisions.push_back({{"time", c.time},
                          {"ids", json::array({c.ids[0], c.ids[1]})},
                          {"penetration", c.penetration}});
  }
  return json{{"tick", r.tick},
              {"time", r.time},
              {"vehicles", std::move(vehicles)},
              {"collisions", std::move(collisions)}};
}

FrameRecord frame_from(const json& j) {
  FrameRecord r;
  r.tick = j.at("tick").get<std::int64_t>();
  r.time = j.at("time").get<double>();
  for (const auto& v : j.at("vehicles")) {
    const auto& p = v.at("pose");
    const auto& size = v.at("size");
    r.vehicles.push_back({v.at("id").get<std::string>(),
                          {p.at(0).get<double>(), p.at(1).get<double>(),
                           p.at(2).get<double>()},
                          v.at("speed").get<double>(),
                          v.at("accel").get<double>(),
                          v.at("lane").get<std::string>(),
                          size.at(0).get<double>(),
                          size.at(1).get<double>()});
  }
  for (const auto& c : j.at("collisions")) {
    r.collisions.push_back({c.at("time").get<double>(),
                            {c.at("ids").at(0).get<std::string>(),
                             c.at("ids").at(1).get<std::string>()},
                            c.at("penetration").get<double>()});
  }
  return r;
}

json score_json(const FrameScore& f) {
  return json{{"t", f.t},         {"nc", f.nc},   {"dac", f.dac},
              {"ep", f.ep},       {"ttc", f.ttc}, {"comfort", f.comfort},
              {"pdms_t", f.pdms_t}};
}

FrameScore score_from(const json& j) {
  return {j.at("t").get<std::int64_t>(), j.at("nc").get<int>(),
          j.at("dac").get<int>(),        j.at("ep").get<double>(),
          j.at("ttc").get<int>(),        j.at("comfort").get<int>(),
          j.at("pdms_t").get<double>()};
}

json control_json(const ControlRecord& r) {
  json wps = json::array();
  for (const auto& w : r.plan.waypoints) wps.push_back(json::array({w.x, w.y, w.yaw}));
  return json{
      {"frame_id", r.frame_id},
      {"tick", r.tick},
      {"time", r.time},
      {"dream",
       {{"payload_hash", r.payload_hash},
        {"reference_frame_id",
         r.reference_frame_id ? json(*r.reference_frame_id) : json(nullptr)},
        {"reference_hash", r.reference_hash},
        {"image_hashes", r.image_hashes},
        {"response_hash", r.response_hash},
        {"renderer_tag", r.renderer_tag},
        {"latency_ms", r.dream_latency_ms}}},
      {"observation",
       {{"ego_status",
         {{"speed", r.ego_status.speed},
          {"accel", r.ego_status.accel},
          {"yaw_rate", r.ego_status.yaw_rate}}},
        {"command", json::array({r.command.x, r.command.y})}}},
      {"plan", {{"issued_at", r.plan.issued_at}, {"waypoints", std::move(wps)}}},
      {"agent", {{"degraded", r.agent_degraded}, {"latency_ms", r.agent_latency_ms}}},
      {"route_s", r.route_s},
      {"reference_plan", poses_json(r.reference_plan)},
      {"score", score_json(r.score)},
  };
}

ControlRecord control_from(const json& j) {
  ControlRecord r;
  r.frame_id = j.at("frame_id").get<std::int64_t>();
  r.tick = j.at("tick").get<std::int64_t>();
  r.time = j.at("time").get<double>();
  const auto& d = j.at("dream");
  r.payload_hash = d.at("payload_hash").get<std::string>();
  if (!d.at("reference_frame_id").is_null()) {
    r.reference_frame_id = d.at("reference_frame_id").get<std::int64_t>();
  }
  r.reference_hash = d.at("reference_hash").get<std::string>();
  r.image_hashes = d.at("image_hashes").get<std::vector<std::string>>();
  r.response_hash = d.at("response_hash").get<std::string>();
  r.renderer_tag = d.at("renderer_tag").get<std::string>();
  r.dream_latency_ms = d.at("latency_ms").get<double>();
  const auto& o = j.at("observation");
  const auto& st = o.at("ego_status");
  r.ego_status = {st.at("speed").get<double>(), st.at("accel").get<double>(),
                  st.at("yaw_rate").get<double>()};
  r.command = {o.at("command").at(0).get<double>(), o.at("command").at(1).get<double>()};
  const auto& p = j.at("plan");
  r.plan.issued_at = p.at("issued_at").get<double>();
  const auto& wps = p.at("waypoints");
  if (wps.size() != r.plan.waypoints.size()) {
    throw ProtocolError("logged plan must have 6 waypoints");
  }
  for (std::size_t i = 0; i < wps.size(); ++i) {
    r.plan.waypoints[i] = {wps[i].at(0).get<double>(), wps[i].at(1).get<double>(),
                           wps[i].at(2).get<double>()};
  }
  r.agent_degraded = j.at("agent").at("degraded").get<bool>();
  r.agent_latency_ms = j.at("agent").at("latency_ms").get<double>();
  r.route_s = j.at("route_s").get<double>();
  r.reference_plan = poses_from(j.at("reference_plan"));
  r.score = score_from(j.at("score"));
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Writer

void EpisodeLogWriter::append(std::string_view type, std::string body_json) {
  if (closed_) throw ContractError("episode log is already closed");
  json body = json::parse(body_json);
  body["type"] = std::string(type);
  body["seq"] = seq_;
  body["prev"] = prev_hash_;
  const std::string hash = sha256_hex(body.dump());
  body["hash"] = hash;
  std::string line = body.dump();
  line += '\n';
  text_ += line;
  if (sink_) {
    *sink_ << line;
    sink_->flush();
  }
  prev_hash_ = hash;
  ++seq_;
}

void EpisodeLogWriter::header(const std::string& episode_id,
                              const SimulationConfig& config) {
  if (seq_ != 0) throw ContractError("the header must be the first record");
  json body{{"format", std::string(kLogFormat)},
            {"protocol_version", std::string(kProtocolVersion)},
            {"version", ARENA_VERSION},
            {"episode_id", episode_id},
            {"config", json::parse(config_to_json(config, -1))},
            {"config_hash", config_hash(config)},
            {"seed", config.seed}};
  append("header", body.dump());
}

void EpisodeLogWriter::frame(const FrameRecord& record) {
  append("frame", frame_json(record).dump());
  ++frames_;
}

void EpisodeLogWriter::control(const ControlRecord& record) {
  append("control", control_json(record).dump());
  ++controls_;
}

void EpisodeLogWriter::termination(const Termination& t, double route_completion) {
  append("termination", json{{"kind", std::string(to_string(t.kind))},
                             {"detail", t.detail},
                             {"time", t.time},
                             {"route_completion", route_completion}}
                            .dump());
  append("index", json{{"records", seq_ + 1},
                       {"frames", frames_},
                       {"controls", controls_},
                       {"termination_seq", seq_ - 1}}
                      .dump());
  closed_ = true;
}

// ---------------------------------------------------------------------------
// Reader

EpisodeLog parse_episode_log(std::string_view text) {
  EpisodeLog log;
  std::string prev;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_index = false;
  std::int64_t last_tick = -1;
  double last_control_time = -1.0;
  std::map<std::int64_t, std::size_t> frame_ticks;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    if (line.empty()) continue;
    ++line_no;
    auto fail = [&](const std::string& what) -> IntegrityError {
      return IntegrityError(what, line_no);
    };
    if (have_index) throw fail("record after the closing index");
    json body;
    try {
      body = json::parse(line);
    } catch (const json::parse_error&) {
      throw fail("unparseable record");
    }
    if (!body.is_object() || !body.contains("hash") || !body["hash"].is_string()) {
      throw fail("record without a hash");
    }
    const std::string hash = body["hash"].get<std::string>();
    body.erase("hash");
    if (sha256_hex(body.dump()) != hash) throw fail("record hash mismatch");
    if (body.value("prev", std::string("?")) != prev) throw fail("broken hash chain");
    if (!body.contains("seq") || body["seq"] != line_no - 1) {
      throw fail("sequence number out of order");
    }
    prev = hash;
    try {
      const std::string type = body.at("type").get<std::string>();
      if (line_no == 1) {
        if (type != "header" || body.at("format") != kLogFormat) {
          throw fail("the first record must be an episode header");
        }
        log.episode_id = body.at("episode_id").get<std::string>();
        log.config = parse_config(body.at("config").dump());
        log.config_hash = body.at("config_hash").get<std::string>();
        log.version = body.at("version").get<std::string>();
        if (config_hash(log.config) != log.config_hash) {
          throw fail("config hash mismatch");
        }
        continue;
      }
      if (log.termination && type != "index") {
        throw fail("record after the termination");
      }
      if (type == "frame") {
        FrameRecord f = frame_from(body);
        if (f.tick != last_tick + 1) throw fail("frame ticks are not consecutive");
        last_tick = f.tick;
        frame_ticks[f.tick] = log.frames.size();
        log.frames.push_back(std::move(f));
      } else if (type == "control") {
        ControlRecord c = control_from(body);
        if (!frame_ticks.contains(c.tick)) {
          throw fail("control record references a missing frame");
        }
        if (c.time <= last_control_time) throw fail("control timestamps not increasing");
        last_control_time = c.time;
        if (c.response_hash != image_set_hash(c.image_hashes)) {
          throw fail("response hash does not match its images");
        }
        if (!log.controls.empty()) {
          const auto& before = log.controls.back();
          if (c.reference_frame_id != before.frame_id ||
              c.reference_hash != before.response_hash) {
            throw fail("autoregressive reference chain broken");
          }
        } else if (c.reference_frame_id || !c.reference_hash.empty()) {
          throw fail("first control record cannot have a reference");
        }
        log.controls.push_back(std::move(c));
      } else if (type == "termination") {
        log.termination = Termination{
            termination_kind_from_string(body.at("kind").get<std::string>()),
            body.at("detail").get<std::string>(), body.at("time").get<double>()};
        log.route_completion = body.at("route_completion").get<double>();
      } else if (type == "index") {
        if (!log.termination) throw fail("index before the termination");
        if (body.at("records").get<std::size_t>() != line_no ||
            body.at("frames").get<std::size_t>() != log.frames.size() ||
            body.at("controls").get<std::size_t>() != log.controls.size()) {
          throw fail("index counts disagree with the log");
        }
        have_index = true;
      } else {
        throw fail("unknown record type '" + type + "'");
      }
    } catch (const IntegrityError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(std::string("malformed record: ") + e.what());
    }
  }
  if (line_no == 0) throw IntegrityError("empty episode log", 0);
  if (!log.termination) throw IntegrityError("log has no termination record", line_no);
  if (!have_index) throw IntegrityError("log has no closing index", line_no);
  return log;
}

EpisodeLog read_episode_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArenaError("cannot read episode log '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_episode_log(buf.str());
}

std::map<std::int64_t, AgentPlan> recorded_plans(const EpisodeLog& log) {
  std::map<std::int64_t, AgentPlan> plans;
  for (const auto& c : log.controls) plans[c.frame_id] = c.plan;
  return plans;
}

// ---------------------------------------------------------------------------
// Re-scoring

EvalReport rescore(const EpisodeLog& log, const EvalConfig& eval,
                   const RoadGraph& graph, const Route& route) {
  EvalReport report;
  report.config = eval;
  report.rescored = !(eval == log.config.eval);
  std::map<std::int64_t, const FrameRecord*> frames;
  for (const auto& f : log.frames) frames[f.tick] = &f;
  for (const auto& c : log.controls) {
    const FrameRecord& f = *frames.at(c.tick);
    ScoringContext ctx;
    ctx.graph = &graph;
    ctx.route = &route;
    ctx.route_s = c.route_s;
    ctx.reference_plan = c.reference_plan;
    const LoggedVehicle& ego = f.vehicles.front();
    ctx.ego_footprint.length = ego.length;
    ctx.ego_footprint.width = ego.width;
    for (std::size_t i = 1; i < f.vehicles.size(); ++i) {
      const auto& v = f.vehicles[i];
      VehicleState s;
      s.id = v.id;
      s.pose = v.pose;
      s.speed = v.speed;
      s.footprint.length = v.length;
      s.footprint.width = v.width;
      ctx.background.push_back(std::move(s));
    }
    std::vector<Pose2> plan;
    for (const auto& p : interpolate_agent_plan(c.plan, Pose2{})) {
      plan.push_back(to_world(ego.pose, p));
    }
    report.frame_scores.push_back(compute_frame_subscores(plan, ctx, eval, c.frame_id));
  }
  if (log.termination) report.termination = *log.termination;
  report.route_completion = log.route_completion;
  finalize_report(report);
  return report;
}

}  // namespace arena
