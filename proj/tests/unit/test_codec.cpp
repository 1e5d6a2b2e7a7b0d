#include <doctest.h>

#include "arena/codec.hpp"
#include "arena/errors.hpp"

using namespace arena;

namespace {

Bytes bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("base64 matches the standard test vectors") {
  const std::pair<const char*, const char*> vectors[] = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},        {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, encoded] : vectors) {
    CHECK(base64_encode(bytes_of(plain)) == encoded);
    CHECK(base64_decode(encoded) == bytes_of(plain));
  }
}

TEST_CASE("base64 rejects malformed text") {
  CHECK_THROWS_AS(base64_decode("Zm9"), ProtocolError);
  CHECK_THROWS_AS(base64_decode("Zm9v!A=="), ProtocolError);
  CHECK_THROWS_AS(base64_decode("Zg=a"), ProtocolError);
}

TEST_CASE("sha256 known digests") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("PNG round trip is lossless and deterministic") {
  Image img(17, 9, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  const Bytes a = encode_png(img);
  CHECK(a == encode_png(img));
  CHECK(decode_png(a) == img);
  Image gray(5, 4, 1);
  gray.pixels[3] = 200;
  CHECK(decode_png(encode_png(gray)) == gray);
  CHECK_THROWS_AS(decode_png(bytes_of("not a png")), ProtocolError);
}

TEST_CASE("canvas images round trip") {
  Canvas c(CanvasKind::kBev, 6, 4, 3);
  c.at(0, 1, 2) = 1;
  c.at(2, 3, 5) = 1;
  const Image img = canvas_to_image(c);
  CHECK(img.height == 12);
  CHECK(img.channels == 1);
  CHECK(image_to_canvas(img, CanvasKind::kBev, 3) == c);
}
