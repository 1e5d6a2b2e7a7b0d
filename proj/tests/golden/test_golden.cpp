#include <doctest.h>

#include <nlohmann/json.hpp>

#include "arena/errors.hpp"
#include "golden_inputs.hpp"
#include "scenes.hpp"

using namespace arena;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name) {
  const std::string text = scenes::read_file(std::string(ARENA_GOLDEN_DIR) + "/" + name);
  REQUIRE_FALSE(text.empty());
  return text;
}

/// Applies `edit` to the parsed fixture and returns the re-serialized body.
template <typename Edit>
std::string mutated(const std::string& name, Edit edit) {
  json doc = json::parse(fixture(name));
  edit(doc);
  return doc.dump();
}

}  // namespace

TEST_CASE("fixtures round trip byte for byte") {
  const std::string req = fixture("dream_request.json");
  CHECK(serialize(parse_dream_request(req)) == req);
  const std::string resp = fixture("dream_response.json");
  CHECK(serialize(parse_dream_response(resp)) == resp);
  const std::string obs = fixture("agent_observation.json");
  CHECK(serialize(parse_agent_observation(obs)) == obs);
  const std::string plan = fixture("agent_plan.json");
  CHECK(serialize(parse_agent_plan(plan)) == plan);
}

TEST_CASE("fixtures match the current generator") {
  CHECK(serialize(golden::dream_request()) == fixture("dream_request.json"));
  CHECK(serialize(golden::dream_response()) == fixture("dream_response.json"));
  CHECK(serialize(golden::agent_observation()) == fixture("agent_observation.json"));
  CHECK(serialize(golden::agent_plan()) == fixture("agent_plan.json"));
}

TEST_CASE("fixtures are valid messages") {
  const DreamRequest req = parse_dream_request(fixture("dream_request.json"));
  CHECK_NOTHROW(req.validate());
  CHECK_NOTHROW(check_response(req, parse_dream_response(fixture("dream_response.json"))));
  CHECK_NOTHROW(parse_agent_observation(fixture("agent_observation.json")).validate());
  CHECK(parse_dream_response(handle_dream_body(fixture("dream_request.json"))).images ==
        parse_dream_response(fixture("dream_response.json")).images);
}

TEST_CASE("malformed bodies are rejected") {
  for (const char* name : {"dream_request.json", "dream_response.json",
                           "agent_observation.json", "agent_plan.json"}) {
    CAPTURE(name);
    const std::string text = fixture(name);
    auto parse = [&](const std::string& body) {
      const std::string n = name;
      if (n == "dream_request.json") return (void)parse_dream_request(body);
      if (n == "dream_response.json") return (void)parse_dream_response(body);
      if (n == "agent_observation.json") return (void)parse_agent_observation(body);
      (void)parse_agent_plan(body);
    };
    CHECK_THROWS_AS(parse(text.substr(0, text.size() / 2)), ProtocolError);
    CHECK_THROWS_AS(parse(mutated(name, [](json& d) { d["protocol_version"] = "arena-wire/0"; })),
                    ProtocolError);
    CHECK_THROWS_AS(parse(mutated(name, [](json& d) { d.erase("protocol_version"); })),
                    ProtocolError);
    CHECK_THROWS_AS(parse("[]"), ProtocolError);
  }
  CHECK_THROWS_AS(parse_dream_response(mutated("dream_response.json",
                                               [](json& d) { d["images"][0] = "@@@@"; })),
                  ProtocolError);
  CHECK_THROWS_AS(parse_agent_observation(mutated("agent_observation.json",
                                                  [](json& d) { d["command"] = {1.0}; })),
                  ProtocolError);
  CHECK_THROWS_AS(parse_agent_plan(mutated("agent_plan.json",
                                           [](json& d) { d["waypoints"].erase(0); })),
                  ContractError);
  CHECK_THROWS_AS(parse_dream_request(mutated("dream_request.json",
                                              [](json& d) { d["payload"]["frame_id"] = "x"; })),
                  ProtocolError);
}
