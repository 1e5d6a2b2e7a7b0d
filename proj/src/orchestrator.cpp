#include "arena/orchestrator.hpp"

#include <cmath>

#include "arena/dreamer.hpp"
#include "arena/errors.hpp"
#include "arena/layout.hpp"

namespace arena {

Scenario load_scenario(const SimulationConfig& config) {
  const MapSkeleton skeleton = load_map_skeleton(config.map);
  Scenario s;
  s.graph = build_road_graph(skeleton);
  if (s.graph.empty()) throw EmptyMapError("map '" + config.map + "' has no lanes");
  Vec2 start, goal;
  if (config.route.start && config.route.goal) {
    start = *config.route.start;
    goal = *config.route.goal;
    s.route_name = config.route.name.empty() ? "custom" : config.route.name;
  } else {
    const RouteSpec* named = nullptr;
    for (const auto& r : skeleton.routes) {
      if (r.name == config.route.name) named = &r;
    }
    if (!named) {
      throw ValidationError("route.name", "map '" + config.map +
                                              "' has no route named '" +
                                              config.route.name + "'");
    }
    start = named->start;
    goal = named->goal;
    s.route_name = named->name;
  }
  s.route = plan_route(s.graph, start, goal);
  return s;
}

std::string default_episode_id(const SimulationConfig& config) {
  return "ep-" + config_hash(config).substr(0, 16);
}

namespace {

struct ControlFailure {
  TerminationKind kind;
  std::string detail;
};

class EpisodeRunner {
 public:
  EpisodeRunner(const SimulationConfig& config, const RunOptions& options)
      : config_(config), options_(options), writer_(options.log_sink) {}

  EpisodeResult run();

 private:
  void control_tick();
  DreamResponse dream(const DreamRequest& request);
  std::optional<Termination> after_step();
  void finish(Termination t);

  const SimulationConfig& config_;
  const RunOptions& options_;
  EpisodeLogWriter writer_;
  Scenario scenario_;
  TrafficConfig traffic_;
  std::vector<CameraModel> rig_;
  WorldState world_;
  std::map<std::int64_t, AgentPlan> replay_plans_;
  std::map<std::int64_t, const ControlRecord*> replay_controls_;

  std::int64_t frame_id_ = 0;
  std::optional<ReferenceFrame> reference_;
  std::optional<std::vector<EncodedImage>> reference_images_;
  std::string reference_hash_;
  double progress_ = 0.0;
  double prev_yaw_ = 0.0;
  int off_road_frames_ = 0;
  std::vector<FrameScore> scores_;
  std::vector<Vec2> realized_;
  std::optional<ControlFailure> failure_;
  bool complete_ = false;
};

DreamResponse EpisodeRunner::dream(const DreamRequest& request) {
  if (!options_.replay_renderer) {
    return request_frame(config_.dreamer, request);
  }
  RendererBinding local;
  local.kind = RendererKind::kReplay;
  DreamResponse response = request_frame(local, request);
  auto it = replay_controls_.find(request.payload.frame_id);
  if (it == replay_controls_.end()) {
    throw ContractError("replay log has no frame " +
                        std::to_string(request.payload.frame_id));
  }
  std::vector<std::string> hashes;
  for (const auto& img : response.images) hashes.push_back(img.hash());
  if (hashes != it->second->image_hashes) {
    throw ContractError("re-rendered frame " +
                        std::to_string(request.payload.frame_id) +
                        " differs from the logged images");
  }
  response.renderer_tag = it->second->renderer_tag;
  return response;
}

void EpisodeRunner::control_tick() {
  const VehicleState& ego = world_.ego();
  ControlRecord rec;
  rec.frame_id = frame_id_;
  rec.tick = world_.tick;
  rec.time = world_.sim_time;
  rec.route_s = progress_;

  // Renderer.
  const LayoutFrame layout =
      extract_layout(world_, scenario_.graph, config_.layout_radius, frame_id_);
  DreamRequest request;
  request.payload = build_condition_payload(layout, rig_, reference_, config_.prompt,
                                            config_.bev, config_.embedding_bands);
  request.reference_images = reference_images_;
  request.episode_id = options_.episode_id;
  rec.payload_hash = payload_hash(request.payload);
  rec.reference_frame_id = request.payload.reference_frame_id;
  rec.reference_hash = reference_hash_;
  DreamResponse response;
  try {
    response = dream(request);
  } catch (const ArenaError& e) {
    failure_ = ControlFailure{TerminationKind::kRendererFailure, e.what()};
    return;
  }
  for (const auto& img : response.images) rec.image_hashes.push_back(img.hash());
  rec.response_hash = image_set_hash(rec.image_hashes);
  rec.renderer_tag = response.renderer_tag;
  rec.dream_latency_ms = response.latency_ms;

  // Agent.
  AgentObservation obs;
  obs.frame_id = frame_id_;
  obs.images = response.images;
  obs.ego_status = {ego.speed, ego.accel,
                    world_.tick == 0 ? 0.0
                                     : wrap_angle(ego.pose.yaw - prev_yaw_) / kStepDt};
  const Vec2 goal = scenario_.route.point(
      std::min(progress_ + kCommandLookahead, scenario_.route.total_length));
  obs.command = to_local(ego.pose, goal);
  obs.timestamp = world_.sim_time;
  rec.ego_status = obs.ego_status;
  rec.command = obs.command;
  AgentContext ctx;
  ctx.world = &world_;
  ctx.graph = &scenario_.graph;
  ctx.route = &scenario_.route;
  ctx.idm = traffic_.idm;
  ctx.recorded_plans = &replay_plans_;
  AgentResult agent;
  try {
    agent = request_plan(config_.agent, obs, ctx);
  } catch (const ArenaError& e) {
    failure_ = ControlFailure{TerminationKind::kAgentTimeout, e.what()};
    return;
  }
  rec.plan = agent.plan;
  rec.agent_degraded = agent.degraded;
  rec.agent_latency_ms = agent.latency_ms;

  // Scoring against constant-velocity forecasts and the engine planner.
  ScoringContext sc;
  sc.graph = &scenario_.graph;
  sc.route = &scenario_.route;
  sc.route_s = progress_;
  sc.ego_footprint = ego.footprint;
  for (const auto& [id, v] : world_.vehicles) {
    if (v.role != VehicleRole::kEgo) sc.background.push_back(v);
  }
  for (const auto& s : engine_ego_plan(world_, scenario_.graph, traffic_).samples) {
    sc.reference_plan.push_back(s.pose);
  }
  rec.reference_plan = sc.reference_plan;
  std::vector<Pose2> plan_world;
  for (const auto& p : interpolate_agent_plan(agent.plan, Pose2{})) {
    plan_world.push_back(to_world(ego.pose, p));
  }
  rec.score = compute_frame_subscores(plan_world, sc, config_.eval, frame_id_);
  scores_.push_back(rec.score);

  world_ = set_ego_mode(world_, config_.mode, agent.plan);
  writer_.control(rec);

  reference_ = ReferenceFrame{frame_id_, world_.ego().pose};
  reference_images_ = response.images;
  reference_hash_ = rec.response_hash;
  ++frame_id_;
}

std::optional<Termination> EpisodeRunner::after_step() {
  const VehicleState& ego = world_.ego();
  const double t = world_.sim_time;
  progress_ = advance_route_progress(scenario_.route, progress_, ego.pose.position());
  realized_.push_back(ego.pose.position());
  for (const auto& c : world_.collisions) {
    if (c.ids[0] == kEgoId || c.ids[1] == kEgoId) {
      const std::string& other = c.ids[0] == kEgoId ? c.ids[1] : c.ids[0];
      return Termination{TerminationKind::kCollision, "ego collided with " + other, t};
    }
  }
  off_road_frames_ = scenario_.graph.in_drivable_area(ego.pose.position())
                         ? 0
                         : off_road_frames_ + 1;
  if (off_road_frames_ >= kOffRoadFrames) {
    return Termination{TerminationKind::kOffRoad,
                       "ego outside the drivable area for " +
                           std::to_string(kOffRoadFrames) + " frames",
                       t};
  }
  if (progress_ >= scenario_.route.total_length - kCompletionTolerance) {
    complete_ = true;
    return Termination{TerminationKind::kRouteComplete, "reached the route end", t};
  }
  if (t >= config_.time_limit - 1e-9) {
    return Termination{TerminationKind::kTimeLimit, "time limit reached", t};
  }
  return std::nullopt;
}

void EpisodeRunner::finish(Termination t) {
  const double rc =
      complete_ ? 1.0
                : std::clamp(progress_ / scenario_.route.total_length, 0.0, 1.0);
  writer_.termination(t, rc);
}

EpisodeResult EpisodeRunner::run() {
  config_.validate();
  scenario_ = load_scenario(config_);
  traffic_ = config_.traffic;
  traffic_.seed = config_.seed;
  rig_ = default_rig(config_.rig);
  if (options_.replay_source) {
    replay_plans_ = recorded_plans(*options_.replay_source);
    for (const auto& c : options_.replay_source->controls) {
      replay_controls_[c.frame_id] = &c;
    }
  }

  const Route& route = scenario_.route;
  EgoSpawn spawn;
  spawn.lane_id = route.lane_sequence.front();
  spawn.s = scenario_.graph.lane(spawn.lane_id).project(route.reference_path.front()).s;
  spawn.route_lanes = route.lane_sequence;
  world_ = spawn_background_traffic(scenario_.graph, traffic_, spawn);
  world_ = set_ego_mode(world_, config_.mode);

  writer_.header(options_.episode_id, config_);
  writer_.frame(frame_record(world_));
  progress_ = advance_route_progress(route, 0.0, world_.ego().pose.position());
  realized_.push_back(world_.ego().pose.position());

  std::optional<Termination> end;
  try {
    while (!end) {
      if (options_.cancel && options_.cancel->load()) {
        end = Termination{TerminationKind::kTimeLimit, "cancelled", world_.sim_time};
        break;
      }
      control_tick();
      if (failure_) {
        end = Termination{failure_->kind, failure_->detail, world_.sim_time};
        break;
      }
      if (options_.on_control) options_.on_control(world_.sim_time);
      for (int k = 0; k < kStepsPerControl && !end; ++k) {
        prev_yaw_ = world_.ego().pose.yaw;
        world_ = step(world_, kStepDt, scenario_.graph, traffic_);
        writer_.frame(frame_record(world_));
        end = after_step();
      }
    }
  } catch (const std::exception& e) {
    // Keep the log well formed, then surface the error.
    if (!writer_.closed()) {
      finish({TerminationKind::kTimeLimit, std::string("aborted: ") + e.what(),
              world_.sim_time});
    }
    throw;
  }
  finish(*end);

  EpisodeResult result;
  result.episode_id = options_.episode_id;
  result.log_text = writer_.text();
  result.log = parse_episode_log(result.log_text);
  result.realized_path = std::move(realized_);
  EvalReport& report = result.report;
  report.config = config_.eval;
  report.frame_scores = scores_;
  report.termination = *end;
  report.route_completion = result.log.route_completion;
  finalize_report(report);
  return result;
}

}  // namespace

EpisodeResult run_episode(const SimulationConfig& config, const RunOptions& options) {
  RunOptions opts = options;
  if (opts.episode_id.empty()) opts.episode_id = default_episode_id(config);
  if (config.agent.kind == AgentKind::kReplay && !opts.replay_source) {
    const EpisodeLog source = read_episode_log(config.agent.replay_log);
    opts.replay_source = &source;
    EpisodeRunner runner(config, opts);
    return runner.run();
  }
  EpisodeRunner runner(config, opts);
  return runner.run();
}

EpisodeResult run_open_loop(const SimulationConfig& config, const RunOptions& options) {
  if (config.mode != EgoMode::kOpenLoop) {
    throw ContractError("run_open_loop requires mode open_loop");
  }
  return run_episode(config, options);
}

EpisodeResult replay_episode(const EpisodeLog& log) {
  SimulationConfig config = log.config;
  config.agent = AgentBinding{};
  config.agent.kind = AgentKind::kReplay;
  config.agent.replay_log = "episode:" + log.episode_id;
  RunOptions options;
  options.episode_id = log.episode_id;
  options.replay_source = &log;
  options.replay_renderer = true;
  return run_episode(config, options);
}

}  // namespace arena
