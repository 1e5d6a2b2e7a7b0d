#include <doctest.h>

#include <chrono>
#include <nlohmann/json.hpp>
#include <thread>

#include "arena/errors.hpp"
#include "arena/orchestrator.hpp"
#include "arena/service.hpp"

using namespace arena;
using nlohmann::json;

namespace {

ServiceOptions any_port() {
  ServiceOptions o;
  o.port = 0;
  return o;
}

}  // namespace

TEST_CASE("episode service lifecycle") {
  auto server = BackgroundServer::episode_service(any_port());
  const auto [status, body] = http_get(server->url(), "/healthz", 2000);
  CHECK(status == 200);
  CHECK(json::parse(body)["status"] == "ok");

  SUBCASE("invalid configs are rejected with the field name") {
    try {
      http_post(server->url(), "/episodes", R"({"time_limit": -1})", 2000);
      FAIL("expected a rejection");
    } catch (const ProtocolError& e) {
      const std::string what = e.what();
      CHECK(what.find("422") != std::string::npos);
      CHECK(what.find("time_limit") != std::string::npos);
    }
  }
  SUBCASE("a submitted episode finishes and serves its log") {
    const json accepted = json::parse(http_post(
        server->url(), "/episodes", R"({"time_limit": 2, "embedding_bands": 2})", 2000));
    CHECK(accepted["status"] == "queued");
    const std::string id = accepted["id"];
    json state;
    for (int i = 0; i < 600; ++i) {
      state = json::parse(http_get(server->url(), "/episodes/" + id, 2000).second);
      if (state["status"] == "finished" || state["status"] == "failed") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    REQUIRE(state["status"] == "finished");
    CHECK(state["termination"] == "TIME_LIMIT");
    const auto [log_status, log_text] = http_get(server->url(), "/episodes/" + id + "/log", 2000);
    CHECK(log_status == 200);
    CHECK_NOTHROW(parse_episode_log(log_text));
    CHECK(http_get(server->url(), "/episodes/nope", 2000).first == 404);
  }
}

TEST_CASE("remote renderer and agent drive an episode") {
  auto dreamer = BackgroundServer::dreamer(any_port());
  auto agent = BackgroundServer::agent(any_port(), "constant_velocity");
  SimulationConfig remote;
  remote.time_limit = 2.0;
  remote.embedding_bands = 2;
  remote.dreamer = {RendererKind::kRemote, dreamer->url(), 10000};
  remote.agent = {AgentKind::kRemote, agent->url(), 10000, ""};
  SimulationConfig local = remote;
  local.dreamer = {};
  local.agent = {AgentKind::kConstantVelocity, "", kDefaultTimeoutMs, ""};
  const EpisodeResult r = run_episode(remote);
  const EpisodeResult l = run_episode(local);
  CHECK(r.log.frames == l.log.frames);
  CHECK(r.report.frame_scores == l.report.frame_scores);
  REQUIRE(r.log.controls.size() == l.log.controls.size());
  for (std::size_t i = 0; i < r.log.controls.size(); ++i) {
    CHECK(r.log.controls[i].image_hashes == l.log.controls[i].image_hashes);
  }
}

TEST_CASE("a remote agent returning five waypoints breaks the contract") {
  auto bad = BackgroundServer::custom(any_port(), "/plan", [](std::string_view body) {
    const json obs = json::parse(body);
    json wps = json::array();
    for (int k = 1; k <= 5; ++k) wps.push_back({{"x", k}, {"y", 0.0}, {"yaw", 0.0}});
    return json{{"protocol_version", std::string(kProtocolVersion)},
                {"issued_at", obs["timestamp"]},
                {"waypoints", wps}}
        .dump();
  });
  AgentObservation obs;
  obs.images.push_back(EncodedImage::from_image(Image(2, 2, 3)));
  CHECK_THROWS_AS(request_plan({AgentKind::kRemote, bad->url(), 2000, ""}, obs), ContractError);

  SimulationConfig c;
  c.time_limit = 2.0;
  c.embedding_bands = 2;
  c.agent = {AgentKind::kRemote, bad->url(), 2000, ""};
  const EpisodeResult r = run_episode(c);
  CHECK(r.report.termination.kind == TerminationKind::kAgentTimeout);
}

TEST_CASE("transport failures") {
  CHECK_THROWS_AS(http_get("http://127.0.0.1:9", "/healthz", 300), TransportError);
  CHECK_THROWS_AS(http_post("http://127.0.0.1:9", "/plan", "{}", 300), TransportError);
  auto dreamer = BackgroundServer::dreamer(any_port());
  try {
    http_post(dreamer->url(), "/dream", "{broken", 2000);
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("400") != std::string::npos);
  }
}
