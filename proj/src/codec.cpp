#include "arena/codec.hpp"

#include <png.h>
#include <openssl/evp.h>

#include <array>
#include <csetjmp>
#include <cstring>
#include <memory>

#include "arena/errors.hpp"

namespace arena {

namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == data.size()) {
    const std::uint32_t v = data[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ProtocolError("base64 length is not a multiple of 4");
  }
  Bytes out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::array<int, 4> v{};
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && last && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw ProtocolError("base64 padding in the middle");
      v[k] = decode_char(c);
      if (v[k] < 0) throw ProtocolError("invalid base64 character");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw ArenaError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// PNG

Image::Image(int width_, int height_, int channels_)
    : width(width_),
      height(height_),
      channels(channels_),
      pixels(static_cast<std::size_t>(width_) * height_ * channels_, 0) {}

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct ReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

// libpng is C: errors unwind with longjmp back to the setjmp in the caller,
// which then raises the C++ exception.
[[noreturn]] void png_error_handler(png_structp png, png_const_charp message) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = message;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

Bytes encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("PNG encoder supports 1 or 3 channels");
  }
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) *
                                 image.height * image.channels) {
    throw ContractError("image buffer does not match its dimensions");
  }
  PngWriter w;
  std::string error;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error,
                                  png_error_handler, png_warning_handler);
  if (!w.png) throw ArenaError("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw ArenaError("png_create_info_struct failed");
  Bytes out;
  if (setjmp(png_jmpbuf(w.png))) throw ArenaError("PNG encoding: " + error);
  png_set_write_fn(
      w.png, &out,
      [](png_structp png, png_bytep data, png_size_t length) {
        auto* buffer = static_cast<Bytes*>(png_get_io_ptr(png));
        buffer->insert(buffer->end(), data, data + length);
      },
      nullptr);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_filter(w.png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_compression_level(w.png, 6);
  png_write_info(w.png, w.info);
  const std::size_t stride =
      static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y) {
    png_write_row(w.png, const_cast<png_bytep>(image.pixels.data() + y * stride));
  }
  png_write_end(w.png, nullptr);
  return out;
}

Image decode_png(std::span<const std::uint8_t> png) {
  if (png.size() < 8 || png_sig_cmp(png.data(), 0, 8) != 0) {
    throw ProtocolError("not a PNG image");
  }
  PngReader r;
  std::string error;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error,
                                 png_error_handler, png_warning_handler);
  if (!r.png) throw ArenaError("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw ArenaError("png_create_info_struct failed");
  ReadCursor cursor{png, 0};
  Image image;
  if (setjmp(png_jmpbuf(r.png))) throw ProtocolError("PNG: " + error);
  png_set_read_fn(r.png, &cursor,
                  [](png_structp p, png_bytep data, png_size_t length) {
                    auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
                    if (c->offset + length > c->data.size()) {
                      png_error(p, "truncated image");
                    }
                    std::memcpy(data, c->data.data() + c->offset, length);
                    c->offset += length;
                  });
  png_read_info(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int type = png_get_color_type(r.png, r.info);
  if (depth != 8 || (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_RGB) ||
      png_get_interlace_type(r.png, r.info) != PNG_INTERLACE_NONE) {
    error = "PNG must be 8-bit gray or RGB, non-interlaced";
    png_longjmp(r.png, 1);
  }
  image = Image(static_cast<int>(png_get_image_width(r.png, r.info)),
                static_cast<int>(png_get_image_height(r.png, r.info)),
                type == PNG_COLOR_TYPE_GRAY ? 1 : 3);
  const std::size_t stride =
      static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y) {
    png_read_row(r.png, image.pixels.data() + y * stride, nullptr);
  }
  png_read_end(r.png, nullptr);
  return image;
}

Image canvas_to_image(const Canvas& canvas) {
  Image image(canvas.width, canvas.height * canvas.channels, 1);
  for (std::size_t i = 0; i < canvas.data.size(); ++i) {
    image.pixels[i] = canvas.data[i] ? 255 : 0;
  }
  return image;
}

Canvas image_to_canvas(const Image& image, CanvasKind kind, int channels) {
  if (image.channels != 1 || channels <= 0 || image.height % channels != 0) {
    throw ProtocolError("canvas image must be gray with stacked channels");
  }
  Canvas canvas(kind, image.width, image.height / channels, channels);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const auto v = image.pixels[i];
    if (v != 0 && v != 255) throw ProtocolError("canvas pixels must be 0 or 255");
    canvas.data[i] = v ? 1 : 0;
  }
  return canvas;
}

}  // namespace arena
