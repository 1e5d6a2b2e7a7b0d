// arena: command-line entry point for map validation, episode runs, suites,
// log replay and the HTTP services.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "arena/agent.hpp"
#include "arena/config.hpp"
#include "arena/episode_log.hpp"
#include "arena/errors.hpp"
#include "arena/eval.hpp"
#include "arena/orchestrator.hpp"
#include "arena/roadnet.hpp"
#include "arena/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arena;

namespace {

// Exit codes outside the termination range.
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitIntegrity = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string agent;
  std::string dreamer;
  std::string out = "arena-out";
};

SimulationConfig resolve_config(const Overrides& o) {
  SimulationConfig c = o.config_path.empty() ? SimulationConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.mode.empty()) {
    if (o.mode != "open_loop" && o.mode != "closed_loop") {
      throw ValidationError("mode", "expected open_loop or closed_loop");
    }
    c.mode = ego_mode_from_string(o.mode);
  }
  if (!o.agent.empty()) c.agent = parse_agent_flag(o.agent);
  if (!o.dreamer.empty()) c.dreamer = parse_dreamer_flag(o.dreamer);
  c.validate();
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArenaError("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArenaError("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Row {
  std::string route;
  double pdms, rc, ads;
  std::string termination;
};

std::string table(const std::vector<Row>& rows, bool average) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %8s %8s %8s  %s\n", "Route", "PDMS", "RC",
                "ADS", "Termination");
  os << line;
  double sp = 0, sr = 0, sa = 0;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %8.4f %8.4f %8.4f  %s\n", r.route.c_str(),
                  r.pdms, r.rc, r.ads, r.termination.c_str());
    os << line;
    sp += r.pdms;
    sr += r.rc;
    sa += r.ads;
  }
  if (average && !rows.empty()) {
    const double n = static_cast<double>(rows.size());
    std::snprintf(line, sizeof line, "%-18s %8.4f %8.4f %8.4f\n", "Average", sp / n,
                  sr / n, sa / n);
    os << line;
  }
  return os.str();
}

Row row_of(const std::string& route, const EvalReport& r) {
  return {route, r.pdms, r.route_completion, r.ads,
          std::string(to_string(r.termination.kind))};
}

/// Runs one episode and writes its log and report under `dir`.
EvalReport run_to_disk(const SimulationConfig& config, const fs::path& dir,
                       const std::string& stem) {
  fs::create_directories(dir);
  const fs::path log_path = dir / (stem + ".ndjson");
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw ArenaError("cannot write '" + log_path.string() + "'");
  RunOptions options;
  options.log_sink = &log;
  const EpisodeResult result = run_episode(config, options);
  write_file(dir / (stem + ".report.json"), report_json(result.report));
  return result.report;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_validate_map(const std::string& path, bool as_json) {
  json doc{{"path", path}};
  int code = 0;
  try {
    const MapSkeleton skeleton = load_map_skeleton(path);
    const RoadGraph graph = build_road_graph(skeleton);
    const auto issues = validate_graph(graph);
    std::size_t connectors = 0;
    for (const auto& [id, lane] : graph.lanes) connectors += lane.connector ? 1 : 0;
    doc["valid"] = issues.empty();
    doc["roads"] = graph.road_count;
    doc["lanes"] = graph.lanes.size();
    doc["connectors"] = connectors;
    doc["junctions"] = graph.junctions.size();
    doc["crossings"] = graph.crossings.size();
    doc["routes"] = skeleton.routes.size();
    json list = json::array();
    for (const auto& i : issues) list.push_back({{"kind", i.kind}, {"detail", i.detail}});
    doc["issues"] = list;
    code = issues.empty() ? 0 : kExitInvalid;
    if (!as_json) {
      std::cout << "map:        " << path << "\n"
                << "roads:      " << graph.road_count << "\n"
                << "lanes:      " << graph.lanes.size() << " (" << connectors
                << " junction connectors)\n"
                << "junctions:  " << graph.junctions.size() << "\n"
                << "routes:     " << skeleton.routes.size() << "\n";
      for (const auto& i : issues) std::cout << "issue: " << i.kind << ": " << i.detail << "\n";
      std::cout << (issues.empty() ? "valid\n" : "INVALID\n");
    }
  } catch (const ParseError& e) {
    doc["valid"] = false;
    doc["error"] = {{"kind", "parse"}, {"detail", e.what()}, {"line", e.line()}};
    code = kExitInvalid;
  } catch (const EmptyMapError& e) {
    doc["valid"] = false;
    doc["error"] = {{"kind", "empty_map"}, {"detail", e.what()}};
    code = kExitInvalid;
  } catch (const TopologyError& e) {
    doc["valid"] = false;
    doc["error"] = {{"kind", "topology"}, {"detail", e.what()}, {"ids", e.ids()}};
    code = kExitInvalid;
  }
  if (as_json) {
    std::cout << doc.dump(2) << "\n";
  } else if (doc.contains("error")) {
    std::cerr << "error: " << doc["error"]["detail"].get<std::string>();
    if (doc["error"].contains("ids")) {
      for (const auto& id : doc["error"]["ids"]) std::cerr << " [" << id.get<std::string>() << "]";
    }
    std::cerr << "\n";
  }
  return code;
}

int cmd_init(const std::string& out) {
  const std::string text = config_to_json(SimulationConfig{}) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_run(const Overrides& o) {
  const SimulationConfig config = resolve_config(o);
  const std::string stem = default_episode_id(config);
  const EvalReport report = run_to_disk(config, o.out, stem);
  std::cout << table({row_of(config.route.name.empty() ? "custom" : config.route.name,
                             report)},
                     false);
  std::cout << "log:    " << (fs::path(o.out) / (stem + ".ndjson")).string() << "\n"
            << "report: " << (fs::path(o.out) / (stem + ".report.json")).string()
            << "\n";
  return exit_code(report.termination.kind);
}

int cmd_suite(const Overrides& o, const std::string& suite_path,
              const std::string& routes_flag) {
  SuiteSpec suite;
  if (!suite_path.empty()) {
    suite = parse_suite(read_file(suite_path));
  } else {
    suite = default_suite(resolve_config(o));
  }
  // Flag overrides apply on top of every entry.
  for (auto& e : suite.entries) {
    if (o.seed) e.config.seed = *o.seed;
    if (!o.mode.empty()) e.config.mode = ego_mode_from_string(o.mode);
    if (!o.agent.empty()) e.config.agent = parse_agent_flag(o.agent);
    if (!o.dreamer.empty()) e.config.dreamer = parse_dreamer_flag(o.dreamer);
    e.config.validate();
  }
  if (!routes_flag.empty()) {
    std::vector<std::string> wanted;
    std::stringstream ss(routes_flag);
    for (std::string r; std::getline(ss, r, ',');) {
      if (!r.empty()) wanted.push_back(r);
    }
    std::vector<SuiteEntry> kept;
    for (const auto& name : wanted) {
      auto it = std::find_if(suite.entries.begin(), suite.entries.end(),
                             [&](const SuiteEntry& e) { return e.route == name; });
      if (it == suite.entries.end()) {
        throw ValidationError("routes", "suite has no route '" + name + "'");
      }
      kept.push_back(*it);
    }
    suite.entries = std::move(kept);
  }
  std::vector<Row> rows;
  json doc{{"routes", json::array()}};
  bool all_complete = true;
  for (const auto& e : suite.entries) {
    std::cerr << "running " << e.route << " ...\n";
    const EvalReport r = run_to_disk(e.config, o.out, e.route);
    rows.push_back(row_of(e.route, r));
    doc["routes"].push_back(
        {{"route", e.route}, {"report", json::parse(report_json(r))}});
    all_complete = all_complete && r.termination.kind == TerminationKind::kRouteComplete;
  }
  const std::string text = table(rows, true);
  double sp = 0, sr = 0, sa = 0;
  for (const auto& r : rows) {
    sp += r.pdms;
    sr += r.rc;
    sa += r.ads;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  doc["average"] = {{"pdms", sp / n}, {"route_completion", sr / n}, {"ads", sa / n}};
  const fs::path report_path =
      suite.report_path.empty() ? fs::path(o.out) / "suite_report.json" : fs::path(suite.report_path);
  write_file(report_path, doc.dump(2) + "\n");
  write_file(report_path.string() + ".txt", text);
  std::cout << text << "report: " << report_path.string() << "\n";
  return all_complete ? 0 : exit_code(TerminationKind::kTimeLimit);
}

int cmd_replay(const std::string& log_path, const std::string& config_path, bool rerun) {
  const EpisodeLog log = read_episode_log(log_path);
  EvalConfig eval = log.config.eval;
  if (!config_path.empty()) eval = load_config(config_path).eval;
  const Scenario scenario = load_scenario(log.config);
  const EvalReport recomputed = rescore(log, eval, scenario.graph, scenario.route);
  bool mismatch = false;
  if (!recomputed.rescored) {
    for (std::size_t i = 0; i < log.controls.size(); ++i) {
      if (!(recomputed.frame_scores[i] == log.controls[i].score)) {
        std::cerr << "frame " << log.controls[i].frame_id
                  << ": recomputed score differs from the log\n";
        mismatch = true;
      }
    }
  }
  std::cout << table({row_of(scenario.route_name, recomputed)}, false);
  std::cout << (recomputed.rescored ? "re-scored with a different eval config\n"
                                    : "scores match the log\n");
  if (rerun) {
    const EpisodeResult again = replay_episode(log);
    bool same = again.report.frame_scores.size() == log.controls.size();
    for (std::size_t i = 0; same && i < log.controls.size(); ++i) {
      same = again.report.frame_scores[i] == log.controls[i].score;
    }
    std::cout << (same ? "full-loop replay reproduces every frame score\n"
                       : "full-loop replay DIVERGED\n");
    mismatch = mismatch || !same;
  }
  std::cout << report_json(recomputed) << "\n";
  return mismatch ? kExitIntegrity : 0;
}

std::unique_ptr<BackgroundServer>* g_server = nullptr;

void on_signal(int) {
  if (g_server && *g_server) (*g_server)->stop();
}

int serve(std::unique_ptr<BackgroundServer> server, const std::string& what) {
  std::cout << what << " listening on " << server->url() << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server->wait();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DriveArena-lite closed-loop driving simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ARENA_VERSION));

  Overrides o;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "Simulation config (JSON)");
    cmd->add_option("--seed", o.seed, "Override the seed");
    cmd->add_option("--mode", o.mode, "open_loop or closed_loop");
    cmd->add_option("--agent", o.agent,
                    "rule_based, constant_velocity, hard_left or an http:// endpoint");
    cmd->add_option("--dreamer", o.dreamer, "builtin_synthetic or an http:// endpoint");
    cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  };

  std::string map_path;
  bool as_json = false;
  auto* validate = app.add_subcommand("validate-map", "Check a map and print statistics");
  validate->add_option("path", map_path, "OSM, fixture JSON or fixture:<name>")->required();
  validate->add_flag("--json", as_json, "Machine-readable output");

  std::string init_out;
  auto* init = app.add_subcommand("init", "Write the full default config");
  init->add_option("--out", init_out, "Destination file (stdout when omitted)");

  auto* run = app.add_subcommand("run", "Run one episode");
  add_overrides(run);

  std::string suite_path, routes_flag;
  auto* suite = app.add_subcommand("suite", "Run the route suite and print the score table");
  add_overrides(suite);
  suite->add_option("--suite", suite_path, "Suite document (defaults to the four fixture routes)");
  suite->add_option("--routes", routes_flag, "Comma-separated subset of route names");

  std::string log_path, replay_config;
  bool rerun = false;
  auto* replay = app.add_subcommand("replay", "Verify a log and recompute its scores");
  replay->add_option("log", log_path, "Episode log (.ndjson)")->required();
  replay->add_option("--config", replay_config, "Take eval weights and thresholds from here");
  replay->add_flag("--rerun", rerun, "Also re-drive the episode with the replay agent");

  ServiceOptions svc;
  std::string agent_kind = "constant_velocity";
  auto* serve_cmd = app.add_subcommand("serve", "Run the episode service");
  serve_cmd->add_option("--host", svc.host)->capture_default_str();
  serve_cmd->add_option("--port", svc.port)->capture_default_str();
  serve_cmd->add_option("--workers", svc.workers)->capture_default_str();
  auto* serve_dreamer = app.add_subcommand("serve-dreamer", "Serve POST /dream (synthetic)");
  serve_dreamer->add_option("--host", svc.host)->capture_default_str();
  serve_dreamer->add_option("--port", svc.port)->capture_default_str();
  auto* serve_agent = app.add_subcommand("serve-agent", "Serve POST /plan");
  serve_agent->add_option("--host", svc.host)->capture_default_str();
  serve_agent->add_option("--port", svc.port)->capture_default_str();
  serve_agent->add_option("--kind", agent_kind, "constant_velocity or hard_left")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate_map(map_path, as_json);
    if (*init) return cmd_init(init_out);
    if (*run) return cmd_run(o);
    if (*suite) return cmd_suite(o, suite_path, routes_flag);
    if (*replay) return cmd_replay(log_path, replay_config, rerun);
    if (*serve_cmd) return serve(BackgroundServer::episode_service(svc), "episode service");
    if (*serve_dreamer) return serve(BackgroundServer::dreamer(svc), "dreamer");
    if (*serve_agent) return serve(BackgroundServer::agent(svc, agent_kind), "agent");
  } catch (const ValidationError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
