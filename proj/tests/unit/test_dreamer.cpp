#include <doctest.h>

#include "arena/dreamer.hpp"
#include "arena/errors.hpp"
#include "arena/service.hpp"

using namespace arena;

namespace {

DreamRequest sample_request(bool with_box = true) {
  LayoutFrame f;
  f.frame_id = 7;
  f.map_layers[0].polygons.push_back({{0, -6}, {60, -6}, {60, 6}, {0, 6}});
  f.map_layers[2].lines.push_back({{3, 0}, {50, 0}});
  if (with_box) f.boxes.push_back({0, {14, 1, 0.8}, {4.6, 1.8, 1.6}, 0.1, "bg-0001"});
  DreamRequest r;
  r.episode_id = "ep-test";
  r.payload = build_condition_payload(f, default_rig(), std::nullopt, "clear noon", {}, 4);
  return r;
}

}  // namespace

TEST_CASE("dream messages round trip") {
  const DreamRequest req = sample_request();
  const DreamRequest back = parse_dream_request(serialize(req));
  CHECK(back == req);
  CHECK(serialize(back) == serialize(req));
  const DreamResponse resp = request_frame({}, req);
  CHECK(parse_dream_response(serialize(resp)) == resp);
}

TEST_CASE("builtin renderer returns one RGB image per camera") {
  const DreamRequest req = sample_request();
  const DreamResponse resp = request_frame({}, req);
  CHECK(resp.frame_id == 7);
  CHECK(resp.renderer_tag == "synthetic");
  REQUIRE(resp.images.size() == 6);
  for (const auto& enc : resp.images) {
    const Image img = enc.decode();
    CHECK(img.width == 400);
    CHECK(img.height == 224);
    CHECK(img.channels == 3);
  }
  CHECK(request_frame({}, req) == resp);
}

TEST_CASE("box pixels coincide with the box canvas") {
  const DreamRequest req = sample_request();
  const auto images = synthetic_render(req.payload);
  std::size_t box_pixels = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Canvas& canvas = req.payload.cameras[i].layout_canvas;
    for (int y = 0; y < canvas.height; ++y) {
      for (int x = 0; x < canvas.width; ++x) {
        bool boxed = false;
        for (std::size_t c = 0; c < kBoxChannels; ++c) {
          boxed = boxed || canvas.at(static_cast<int>(kMapLayerCount + c), y, x);
        }
        const bool odd_red = images[i].at(x, y)[0] % 2 == 1;
        CHECK(boxed == odd_red);
        box_pixels += boxed;
      }
    }
  }
  CHECK(box_pixels > 0);
}

TEST_CASE("prompt decides the sky color") {
  const auto a = prompt_sky_color("clear noon");
  CHECK(a == prompt_sky_color("clear noon"));
  for (auto c : a) CHECK(c % 2 == 0);
}

TEST_CASE("payload hash ignores nothing that matters") {
  const DreamRequest a = sample_request(true);
  const DreamRequest b = sample_request(false);
  CHECK(payload_hash(a.payload) == payload_hash(sample_request(true).payload));
  CHECK(payload_hash(a.payload) != payload_hash(b.payload));
}

TEST_CASE("contract checks on requests and responses") {
  DreamRequest req = sample_request();
  req.payload.reference_frame_id = 6;
  CHECK_THROWS_AS(req.validate(), ContractError);
  DreamResponse resp = request_frame({}, sample_request());
  resp.images.pop_back();
  CHECK_THROWS_AS(check_response(sample_request(), resp), ContractError);
  resp = request_frame({}, sample_request());
  resp.frame_id = 8;
  CHECK_THROWS_AS(check_response(sample_request(), resp), ContractError);
}

TEST_CASE("malformed bodies are protocol errors") {
  CHECK_THROWS_AS(parse_dream_request("{"), ProtocolError);
  CHECK_THROWS_AS(parse_dream_request("{\"protocol_version\":\"arena-wire/1\"}"), ProtocolError);
  CHECK_THROWS_AS(parse_dream_response("[1,2,3]"), ProtocolError);
  CHECK_THROWS_AS(handle_dream_body("null"), ProtocolError);
}

TEST_CASE("an unreachable renderer is a transport error") {
  RendererBinding binding{RendererKind::kRemote, "http://127.0.0.1:9", 500};
  CHECK_THROWS_AS(request_frame(binding, sample_request()), TransportError);
  RendererBinding missing{RendererKind::kRemote, "", 500};
  CHECK_THROWS_AS(missing.validate(), ValidationError);
}
