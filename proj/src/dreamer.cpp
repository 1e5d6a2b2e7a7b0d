#include "arena/dreamer.hpp"

#include <chrono>
#include <cmath>

#include "arena/errors.hpp"
#include "arena/service.hpp"
#include "hash_util.hpp"
#include "json_util.hpp"

namespace arena {

using detail::json;

std::string_view to_string(RendererKind kind) {
  switch (kind) {
    case RendererKind::kBuiltinSynthetic: return "builtin_synthetic";
    case RendererKind::kRemote: return "remote";
    case RendererKind::kReplay: return "replay";
  }
  return "builtin_synthetic";
}

RendererKind renderer_kind_from_string(std::string_view name) {
  for (auto k : {RendererKind::kBuiltinSynthetic, RendererKind::kRemote,
                 RendererKind::kReplay}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("dreamer.kind",
                        "expected builtin_synthetic or remote, got '" +
                            std::string(name) + "'");
}

void RendererBinding::validate() const {
  if (kind == RendererKind::kRemote && endpoint.empty()) {
    throw ValidationError("dreamer.endpoint", "required for a remote binding");
  }
  if (kind != RendererKind::kRemote && !endpoint.empty()) {
    throw ValidationError("dreamer.endpoint", "only valid for a remote binding");
  }
  if (timeout_ms <= 0) {
    throw ValidationError("dreamer.timeout_ms", "must be positive");
  }
}

void DreamRequest::validate() const {
  if (payload.cameras.empty()) {
    throw ContractError("dream request has no cameras");
  }
  if (payload.reference_frame_id.has_value() != reference_images.has_value()) {
    throw ContractError(
        "reference images must accompany a reference frame id and only then");
  }
  if (reference_images && reference_images->size() != payload.cameras.size()) {
    throw ContractError("reference image count differs from the rig size");
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json payload_json(const ConditionPayload& p, bool raw_canvas_hashes) {
  auto canvas = [&](const Canvas& c) {
    if (!raw_canvas_hashes) return detail::canvas_json(c);
    return json{{"kind", std::string(to_string(c.kind))},
                {"width", c.width},
                {"height", c.height},
                {"channels", c.channels},
                {"sha256", sha256_hex(c.data)}};
  };
  json cams = json::array();
  for (const auto& c : p.cameras) {
    cams.push_back({{"camera", detail::camera_json(c.camera)},
                    {"layout_canvas", canvas(c.layout_canvas)},
                    {"cam_embedding", c.cam_embedding}});
  }
  json boxes = json::array();
  for (const auto& b : p.boxes) boxes.push_back(detail::box_json(b));
  json j{{"frame_id", p.frame_id},
         {"bands", p.bands},
         {"cameras", std::move(cams)},
         {"boxes", std::move(boxes)},
         {"box_embeddings", p.box_embeddings},
         {"bev",
          {{"extent", p.bev_config.extent},
           {"resolution", p.bev_config.resolution},
           {"grid", canvas(p.bev_grid)}}},
         {"text_prompt", p.text_prompt}};
  j["reference_frame_id"] =
      p.reference_frame_id ? json(*p.reference_frame_id) : json(nullptr);
  j["relative_pose"] =
      p.relative_pose ? detail::pose_json(*p.relative_pose) : json(nullptr);
  j["rel_embedding"] = p.rel_embedding ? json(*p.rel_embedding) : json(nullptr);
  return j;
}

ConditionPayload payload_from(const json& j) {
  ConditionPayload p;
  p.frame_id = j.at("frame_id").get<std::int64_t>();
  p.bands = j.at("bands").get<int>();
  for (const auto& c : j.at("cameras")) {
    p.cameras.push_back({detail::camera_from(c.at("camera")),
                         detail::canvas_from(c.at("layout_canvas")),
                         c.at("cam_embedding").get<std::vector<double>>()});
  }
  for (const auto& b : j.at("boxes")) p.boxes.push_back(detail::box_from(b));
  p.box_embeddings =
      j.at("box_embeddings").get<std::vector<std::vector<double>>>();
  const auto& bev = j.at("bev");
  p.bev_config = {bev.at("extent").get<double>(),
                  bev.at("resolution").get<double>()};
  p.bev_grid = detail::canvas_from(bev.at("grid"));
  p.text_prompt = j.at("text_prompt").get<std::string>();
  if (!j.at("reference_frame_id").is_null()) {
    p.reference_frame_id = j.at("reference_frame_id").get<std::int64_t>();
  }
  if (!j.at("relative_pose").is_null()) {
    p.relative_pose = detail::pose_from(j.at("relative_pose"));
  }
  if (!j.at("rel_embedding").is_null()) {
    p.rel_embedding = j.at("rel_embedding").get<std::vector<double>>();
  }
  if (p.box_embeddings.size() != p.boxes.size()) {
    throw ProtocolError("box_embeddings must have one entry per box");
  }
  if (p.reference_frame_id.has_value() != p.rel_embedding.has_value()) {
    throw ProtocolError("rel_embedding present iff reference_frame_id is");
  }
  return p;
}

}  // namespace

std::string serialize(const DreamRequest& request) {
  json j{{"protocol_version", std::string(kProtocolVersion)},
         {"episode_id", request.episode_id},
         {"payload", payload_json(request.payload, false)}};
  j["reference_images"] = request.reference_images
                              ? detail::images_json(*request.reference_images)
                              : json(nullptr);
  return j.dump();
}

std::string serialize(const DreamResponse& response) {
  json j{{"protocol_version", std::string(kProtocolVersion)},
         {"frame_id", response.frame_id},
         {"images", detail::images_json(response.images)},
         {"latency_ms", response.latency_ms},
         {"renderer_tag", response.renderer_tag}};
  return j.dump();
}

DreamRequest parse_dream_request(std::string_view body) {
  return detail::protocol_guard("dream request", [&] {
    const json j = detail::parse_json(body, "dream request");
    detail::check_version(j, "dream request");
    DreamRequest r;
    r.episode_id = j.at("episode_id").get<std::string>();
    r.payload = payload_from(j.at("payload"));
    if (!j.at("reference_images").is_null()) {
      r.reference_images = detail::images_from(j.at("reference_images"));
    }
    return r;
  });
}

DreamResponse parse_dream_response(std::string_view body) {
  return detail::protocol_guard("dream response", [&] {
    const json j = detail::parse_json(body, "dream response");
    detail::check_version(j, "dream response");
    DreamResponse r;
    r.frame_id = j.at("frame_id").get<std::int64_t>();
    r.images = detail::images_from(j.at("images"));
    r.latency_ms = j.at("latency_ms").get<double>();
    r.renderer_tag = j.at("renderer_tag").get<std::string>();
    return r;
  });
}

std::string payload_hash(const ConditionPayload& payload) {
  return sha256_hex(payload_json(payload, true).dump());
}

// ---------------------------------------------------------------------------
// Synthetic renderer

std::array<std::uint8_t, 3> prompt_sky_color(std::string_view prompt) {
  // Hue from the prompt hash, fixed saturation and value.
  const double hue =
      static_cast<double>(detail::fnv1a(prompt) % 3600) / 10.0;
  const double s = 0.45;
  const double v = 0.92;
  const double c = v * s;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0.0, g = 0.0, b = 0.0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto channel = [&](double u) {
    return static_cast<std::uint8_t>(
        static_cast<int>(std::lround((u + m) * 255.0)) & 0xFE);
  };
  return {channel(r), channel(g), channel(b)};
}

std::vector<Image> synthetic_render(const ConditionPayload& payload) {
  const auto sky = prompt_sky_color(payload.text_prompt);
  std::vector<Image> images;
  images.reserve(payload.cameras.size());
  for (const auto& cond : payload.cameras) {
    const CameraModel& cam = cond.camera;
    const Canvas& canvas = cond.layout_canvas;
    Image img(cam.width, cam.height, 3);
    // Horizon: image row of the ground-plane vanishing point straight ahead.
    const Vec3 fwd{cam.R[2][0], cam.R[2][1], 0.0};
    const Vec3 dc = mul(cam.R, fwd);
    const double horizon =
        dc.z > 1e-9 ? cam.K[1][1] * dc.y / dc.z + cam.K[1][2] : -1.0;
    auto paint = [&](int x, int y, const std::array<std::uint8_t, 3>& rgb) {
      std::uint8_t* px = img.at(x, y);
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    };
    static constexpr std::array<std::array<std::uint8_t, 3>, 4> kMapColors{
        SyntheticPalette::kDrivable, SyntheticPalette::kCrossing,
        SyntheticPalette::kDivider, SyntheticPalette::kBoundary};
    for (int y = 0; y < img.height; ++y) {
      const bool is_sky = y + 0.5 < horizon;
      for (int x = 0; x < img.width; ++x) {
        paint(x, y, is_sky ? sky : SyntheticPalette::kGround);
        if (canvas.channels != static_cast<int>(kLayoutChannels) ||
            canvas.width != img.width || canvas.height != img.height) {
          continue;
        }
        for (std::size_t c = 0; c < kMapLayerCount; ++c) {
          if (canvas.at(static_cast<int>(c), y, x)) paint(x, y, kMapColors[c]);
        }
        for (std::size_t c = 0; c < kBoxChannels; ++c) {
          if (canvas.at(static_cast<int>(kMapLayerCount + c), y, x)) {
            paint(x, y, SyntheticPalette::kBoxes[c]);
          }
        }
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

// ---------------------------------------------------------------------------
// Transport

void check_response(const DreamRequest& request,
                    const DreamResponse& response) {
  if (response.frame_id != request.payload.frame_id) {
    throw ContractError("dream response frame_id " +
                        std::to_string(response.frame_id) +
                        " does not echo request frame_id " +
                        std::to_string(request.payload.frame_id));
  }
  if (response.images.size() != request.payload.cameras.size()) {
    throw ContractError("dream response has " +
                        std::to_string(response.images.size()) +
                        " images for " +
                        std::to_string(request.payload.cameras.size()) +
                        " cameras");
  }
  for (std::size_t i = 0; i < response.images.size(); ++i) {
    const Image img = response.images[i].decode();
    const auto& cam = request.payload.cameras[i].camera;
    if (img.width != cam.width || img.height != cam.height ||
        img.channels != 3) {
      throw ContractError("dream image " + std::to_string(i) + " is " +
                          std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ", expected " +
                          std::to_string(cam.width) + "x" +
                          std::to_string(cam.height) + " RGB");
    }
  }
}

namespace {

DreamResponse render_locally(const DreamRequest& request) {
  DreamResponse response;
  response.frame_id = request.payload.frame_id;
  response.renderer_tag = "synthetic";
  for (const auto& img : synthetic_render(request.payload)) {
    response.images.push_back(EncodedImage::from_image(img));
  }
  return response;
}

}  // namespace

DreamResponse request_frame(const RendererBinding& binding,
                            const DreamRequest& request) {
  binding.validate();
  request.validate();
  DreamResponse response;
  switch (binding.kind) {
    case RendererKind::kBuiltinSynthetic:
    case RendererKind::kReplay:
      // Latency stays 0 for in-process rendering so logs are reproducible.
      response = render_locally(request);
      break;
    case RendererKind::kRemote: {
      const auto start = std::chrono::steady_clock::now();
      const std::string body = http_post(binding.endpoint, "/dream",
                                         serialize(request), binding.timeout_ms);
      response = parse_dream_response(body);
      response.latency_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - start)
              .count();
      break;
    }
  }
  check_response(request, response);
  return response;
}

std::string handle_dream_body(std::string_view body) {
  const DreamRequest request = parse_dream_request(body);
  try {
    request.validate();
  } catch (const ContractError& e) {
    throw ProtocolError(e.what());
  }
  return serialize(render_locally(request));
}

}  // namespace arena
