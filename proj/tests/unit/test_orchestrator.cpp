#include <doctest.h>

#include "arena/errors.hpp"
#include "arena/orchestrator.hpp"

using namespace arena;

namespace {

SimulationConfig short_config(double seconds) {
  SimulationConfig c;
  c.time_limit = seconds;
  c.embedding_bands = 2;
  return c;
}

}  // namespace

TEST_CASE("scenario loading") {
  const Scenario s = load_scenario(SimulationConfig{});
  CHECK(s.route_name == "sing_route_1");
  CHECK(s.route.total_length > 50.0);
  SimulationConfig bad;
  bad.route.name = "no_such_route";
  CHECK_THROWS(load_scenario(bad));
}

TEST_CASE("episodes are deterministic") {
  const SimulationConfig c = short_config(6.0);
  const EpisodeResult a = run_episode(c);
  const EpisodeResult b = run_episode(c);
  CHECK(a.log_text == b.log_text);
  CHECK(a.episode_id == default_episode_id(c));
  CHECK(a.log.frames.size() == 61);
  CHECK(a.log.controls.size() == 12);
  CHECK(a.report.termination.kind == TerminationKind::kTimeLimit);
  SimulationConfig other = c;
  other.seed = 5;
  CHECK(run_episode(other).log_text != a.log_text);
}

TEST_CASE("the log header carries the effective seed") {
  SimulationConfig c = short_config(1.0);
  c.seed = 41;
  const EpisodeResult r = run_episode(c);
  CHECK(r.log.config.seed == 41);
  CHECK(r.log_text.substr(0, r.log_text.find('\n')).find("\"seed\":41") != std::string::npos);
}

TEST_CASE("a hard-left agent leaves the road") {
  SimulationConfig c = short_config(60.0);
  c.agent.kind = AgentKind::kHardLeft;
  const EpisodeResult r = run_episode(c);
  CHECK(r.report.termination.kind == TerminationKind::kOffRoad);
  CHECK(r.report.route_completion < 1.0);
}

TEST_CASE("open loop ignores the agent") {
  SimulationConfig a = short_config(5.0);
  a.mode = EgoMode::kOpenLoop;
  SimulationConfig b = a;
  b.agent.kind = AgentKind::kConstantVelocity;
  const EpisodeResult ra = run_open_loop(a);
  const EpisodeResult rb = run_open_loop(b);
  CHECK(ra.log.frames == rb.log.frames);
  CHECK_FALSE(ra.report.frame_scores.empty());
  CHECK_THROWS_AS(run_open_loop(short_config(1.0)), ContractError);
}

TEST_CASE("replay reproduces the scores") {
  const EpisodeResult original = run_episode(short_config(5.0));
  const EpisodeLog log = parse_episode_log(original.log_text);
  const EpisodeResult again = replay_episode(log);
  CHECK(again.report.frame_scores == original.report.frame_scores);
  CHECK(again.log.frames == original.log.frames);
  const Scenario s = load_scenario(log.config);
  CHECK(rescore(log, log.config.eval, s.graph, s.route).frame_scores ==
        original.report.frame_scores);
}

TEST_CASE("an unreachable renderer ends the episode cleanly") {
  SimulationConfig c = short_config(5.0);
  c.dreamer = {RendererKind::kRemote, "http://127.0.0.1:9", 300};
  const EpisodeResult r = run_episode(c);
  CHECK(r.report.termination.kind == TerminationKind::kRendererFailure);
  CHECK_NOTHROW(parse_episode_log(r.log_text));
}
