#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arena/codec.hpp"
#include "arena/layout.hpp"

namespace arena {

/// Version tag carried by every wire message.
inline constexpr std::string_view kProtocolVersion = "arena-wire/1";
inline constexpr int kDefaultTimeoutMs = 30000;

enum class RendererKind : std::uint8_t { kBuiltinSynthetic, kRemote, kReplay };
std::string_view to_string(RendererKind kind);
RendererKind renderer_kind_from_string(std::string_view name);

struct RendererBinding {
  RendererKind kind = RendererKind::kBuiltinSynthetic;
  std::string endpoint;  // base URL, e.g. http://127.0.0.1:8101
  int timeout_ms = kDefaultTimeoutMs;

  /// Endpoint required iff remote; timeout must be positive.
  void validate() const;
  bool operator==(const RendererBinding&) const = default;
};

struct DreamRequest {
  std::string episode_id;
  ConditionPayload payload;
  std::optional<std::vector<EncodedImage>> reference_images;

  /// Reference images present iff the payload names a reference frame, and
  /// then one per camera.
  void validate() const;
  bool operator==(const DreamRequest&) const = default;
};

struct DreamResponse {
  std::int64_t frame_id = 0;
  std::vector<EncodedImage> images;  // RGB PNG, one per camera
  double latency_ms = 0.0;
  std::string renderer_tag;
  bool operator==(const DreamResponse&) const = default;
};

std::string serialize(const DreamRequest& request);
std::string serialize(const DreamResponse& response);
/// Both parsers throw ProtocolError for malformed bodies.
DreamRequest parse_dream_request(std::string_view body);
DreamResponse parse_dream_response(std::string_view body);

/// Digest of a payload independent of PNG encoding: canvases are hashed as
/// raw occupancy bytes.
std::string payload_hash(const ConditionPayload& payload);

/// RGB color table of the synthetic renderer.
struct SyntheticPalette {
  static constexpr std::array<std::uint8_t, 3> kGround{96, 104, 88};
  static constexpr std::array<std::uint8_t, 3> kDrivable{70, 72, 76};
  static constexpr std::array<std::uint8_t, 3> kCrossing{224, 224, 216};
  static constexpr std::array<std::uint8_t, 3> kDivider{236, 196, 40};
  static constexpr std::array<std::uint8_t, 3> kBoundary{246, 246, 246};
  /// Box colors all have an odd red value; nothing else does.
  static constexpr std::array<std::array<std::uint8_t, 3>, 10> kBoxes{{
      {{231, 40, 40}},  {{255, 128, 0}},  {{189, 96, 40}},  {{249, 200, 64}},
      {{161, 80, 200}}, {{121, 120, 120}}, {{45, 160, 220}}, {{25, 200, 150}},
      {{223, 60, 160}}, {{253, 90, 20}},
  }};
};

/// Sky color derived from the prompt; every channel is even.
std::array<std::uint8_t, 3> prompt_sky_color(std::string_view prompt);

/// Pure function of the payload: sky above the horizon, ground below, map
/// layers in fixed colors and boxes in their category colors.
std::vector<Image> synthetic_render(const ConditionPayload& payload);

/// One synchronous frame request. Remote bindings POST /dream once with no
/// retries. Throws TransportError, ProtocolError or ContractError.
DreamResponse request_frame(const RendererBinding& binding,
                            const DreamRequest& request);

/// Checks image count and dimensions against the request's rig.
void check_response(const DreamRequest& request, const DreamResponse& response);

/// Server-side handler shared by the CLI and tests: request body in,
/// response body out.
std::string handle_dream_body(std::string_view body);

}  // namespace arena
