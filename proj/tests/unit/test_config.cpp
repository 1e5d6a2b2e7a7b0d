#include <doctest.h>

#include "arena/config.hpp"
#include "arena/errors.hpp"

using namespace arena;

namespace {

std::string field_of(std::string_view text) {
  try {
    parse_config(text).validate();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("defaults survive a JSON round trip") {
  const SimulationConfig def;
  CHECK(parse_config(config_to_json(def)) == def);
  CHECK(parse_config("{}") == def);
  CHECK(config_to_json(parse_config(config_to_json(def))) == config_to_json(def));
}

TEST_CASE("schema errors name the dotted field path") {
  CHECK(field_of(R"({"traffic": {"idm": {"bogus": 1}}})") == "traffic.idm.bogus");
  CHECK(field_of(R"({"time_limit": "long"})") == "time_limit");
  CHECK(field_of(R"({"time_limit": -5})") == "time_limit");
  CHECK(field_of(R"({"traffic": {"cooperation_factor": 2}})") == "traffic.cooperation_factor");
  CHECK(field_of(R"({"eval": {"weights": {"ep": 0, "ttc": 0, "comfort": 0}}})")
            .starts_with("eval.weights"));
  CHECK(field_of(R"({"dreamer": {"kind": "remote"}})").starts_with("dreamer"));
  CHECK(field_of(R"({"mode": "sideways"})") == "mode");
  CHECK(field_of(R"({"unknown_key": true})") == "unknown_key");
  CHECK_THROWS_AS(parse_config("{"), ValidationError);
}

TEST_CASE("partial documents override only what they name") {
  const SimulationConfig c = parse_config(R"({"seed": 7, "traffic": {"spawn_density": 2.5}})");
  CHECK(c.seed == 7);
  CHECK(c.traffic.spawn_density == 2.5);
  CHECK(c.traffic.idm == IdmParams{});
  CHECK(c.time_limit == SimulationConfig{}.time_limit);
}

TEST_CASE("config hash is stable and sensitive") {
  SimulationConfig a;
  SimulationConfig b;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 64);
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("binding flags") {
  CHECK(parse_dreamer_flag("builtin_synthetic").kind == RendererKind::kBuiltinSynthetic);
  const auto remote = parse_dreamer_flag("http://127.0.0.1:8101");
  CHECK(remote.kind == RendererKind::kRemote);
  CHECK(remote.endpoint == "http://127.0.0.1:8101");
  CHECK(parse_agent_flag("hard_left").kind == AgentKind::kHardLeft);
  CHECK(parse_agent_flag("http://localhost:9000").kind == AgentKind::kRemote);
  CHECK_THROWS_AS(parse_agent_flag("psychic"), ValidationError);
}

TEST_CASE("suites") {
  const SuiteSpec def = default_suite(SimulationConfig{});
  REQUIRE(def.entries.size() == 4);
  CHECK(def.entries[0].config.route.name == def.entries[0].route);
  const SuiteSpec s = parse_suite(R"({
    "base": {"seed": 3},
    "routes": [{"name": "boston_route_1",
                "overrides": {"map": "fixture:boston-seaport", "time_limit": 30}}],
    "report": "out.json"})");
  REQUIRE(s.entries.size() == 1);
  CHECK(s.entries[0].config.seed == 3);
  CHECK(s.entries[0].config.time_limit == 30.0);
  CHECK(s.report_path == "out.json");
  CHECK_THROWS_AS(parse_suite(R"({"routes": [{"name": "a"}, {"name": "a"}]})"),
                  ValidationError);
}
