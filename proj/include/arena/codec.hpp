#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arena/layout.hpp"

namespace arena {

using Bytes = std::vector<std::uint8_t>;

std::string base64_encode(std::span<const std::uint8_t> data);
/// Strict RFC 4648 decoding with padding; throws ProtocolError otherwise.
Bytes base64_decode(std::string_view text);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

/// 8-bit interleaved raster; 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  Bytes pixels;

  Image() = default;
  Image(int width, int height, int channels);
  std::uint8_t* at(int x, int y) {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * channels];
  }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * channels];
  }
  bool operator==(const Image&) const = default;
};

/// Lossless PNG with fixed settings, so equal images give equal bytes.
Bytes encode_png(const Image& image);
/// Throws ProtocolError on anything that is not an 8-bit gray/RGB PNG.
Image decode_png(std::span<const std::uint8_t> png);

/// Channels stacked top to bottom as one gray image, occupancy as 0/255.
Image canvas_to_image(const Canvas& canvas);
Canvas image_to_canvas(const Image& image, CanvasKind kind, int channels);

/// PNG bytes carried opaquely through messages and logs.
struct EncodedImage {
  Bytes png;

  static EncodedImage from_image(const Image& image) {
    return {encode_png(image)};
  }
  Image decode() const { return decode_png(png); }
  std::string hash() const { return sha256_hex(png); }
  bool operator==(const EncodedImage&) const = default;
};

}  // namespace arena
