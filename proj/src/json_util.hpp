#pragma once

// nlohmann/json conversions shared by the wire protocols, configs and the
// episode log. Internal to the library.

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

#include "arena/codec.hpp"
#include "arena/errors.hpp"
#include "arena/eval.hpp"
#include "arena/geometry.hpp"
#include "arena/layout.hpp"

namespace arena::detail {

using nlohmann::json;

inline json pose_json(const Pose2& p) {
  return json{{"x", p.x}, {"y", p.y}, {"yaw", p.yaw}};
}
inline Pose2 pose_from(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(),
          j.at("yaw").get<double>()};
}

inline json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw ProtocolError("expected a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json mat3_json(const Mat3& m) {
  json rows = json::array();
  for (const auto& r : m) rows.push_back(json::array({r[0], r[1], r[2]}));
  return rows;
}
inline Mat3 mat3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ProtocolError("expected a 3x3 matrix");
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_array() || j[i].size() != 3) {
      throw ProtocolError("expected a 3x3 matrix");
    }
    for (int k = 0; k < 3; ++k) m[i][k] = j[i][k].get<double>();
  }
  return m;
}

inline json bytes_json(const Bytes& b) { return base64_encode(b); }
inline Bytes bytes_from(const json& j) {
  return base64_decode(j.get<std::string>());
}

inline json canvas_json(const Canvas& c) {
  return json{{"kind", std::string(to_string(c.kind))},
              {"width", c.width},
              {"height", c.height},
              {"channels", c.channels},
              {"png", base64_encode(encode_png(canvas_to_image(c)))}};
}
inline Canvas canvas_from(const json& j) {
  const auto kind = canvas_kind_from_string(j.at("kind").get<std::string>());
  const int channels = j.at("channels").get<int>();
  Canvas c = image_to_canvas(decode_png(bytes_from(j.at("png"))), kind, channels);
  if (c.width != j.at("width").get<int>() ||
      c.height != j.at("height").get<int>()) {
    throw ProtocolError("canvas dimensions disagree with its image");
  }
  return c;
}

inline json camera_json(const CameraModel& c) {
  return json{{"name", c.name},
              {"K", mat3_json(c.K)},
              {"R", mat3_json(c.R)},
              {"T", vec3_json(c.T)},
              {"image_size", json::array({c.width, c.height})}};
}
inline CameraModel camera_from(const json& j) {
  CameraModel c;
  c.name = j.at("name").get<std::string>();
  c.K = mat3_from(j.at("K"));
  c.R = mat3_from(j.at("R"));
  c.T = vec3_from(j.at("T"));
  const auto& size = j.at("image_size");
  if (!size.is_array() || size.size() != 2) {
    throw ProtocolError("image_size must be [width, height]");
  }
  c.width = size[0].get<int>();
  c.height = size[1].get<int>();
  return c;
}

inline json box_json(const LayoutBox& b) {
  return json{{"category", std::string(kObjectClasses.at(b.category))},
              {"center", vec3_json(b.center)},
              {"size", vec3_json(b.size)},
              {"yaw", b.yaw},
              {"source_id", b.source_id}};
}
inline LayoutBox box_from(const json& j) {
  LayoutBox b;
  b.category = object_class_index(j.at("category").get<std::string>());
  b.center = vec3_from(j.at("center"));
  b.size = vec3_from(j.at("size"));
  b.yaw = j.at("yaw").get<double>();
  b.source_id = j.at("source_id").get<std::string>();
  return b;
}

inline json images_json(const std::vector<EncodedImage>& images) {
  json out = json::array();
  for (const auto& img : images) out.push_back(bytes_json(img.png));
  return out;
}
inline std::vector<EncodedImage> images_from(const json& j) {
  if (!j.is_array()) throw ProtocolError("images must be an array");
  std::vector<EncodedImage> out;
  for (const auto& e : j) out.push_back({bytes_from(e)});
  return out;
}

inline json eval_config_json(const EvalConfig& c) {
  return json{{"weights",
               {{"ep", c.weights.ep},
                {"ttc", c.weights.ttc},
                {"comfort", c.weights.comfort}}},
              {"thresholds",
               {{"ttc", c.thresholds.ttc},
                {"max_lon_accel", c.thresholds.max_lon_accel},
                {"max_lat_accel", c.thresholds.max_lat_accel},
                {"max_jerk", c.thresholds.max_jerk}}}};
}
inline EvalConfig eval_config_from(const json& j) {
  EvalConfig c;
  const auto& w = j.at("weights");
  c.weights = {w.at("ep").get<double>(), w.at("ttc").get<double>(),
               w.at("comfort").get<double>()};
  const auto& t = j.at("thresholds");
  c.thresholds = {t.at("ttc").get<double>(), t.at("max_lon_accel").get<double>(),
                  t.at("max_lat_accel").get<double>(),
                  t.at("max_jerk").get<double>()};
  return c;
}

/// Runs `fn`, turning JSON and validation failures into ProtocolError.
template <typename Fn>
auto protocol_guard(std::string_view what, Fn&& fn) {
  try {
    return fn();
  } catch (const ProtocolError&) {
    throw;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string(what) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ProtocolError(std::string(what) + ": " + e.what());
  }
}

inline json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string(what) + ": " + e.what());
  }
}

inline void check_version(const json& j, std::string_view what) {
  if (!j.contains("protocol_version") ||
      j.at("protocol_version") != "arena-wire/1") {
    throw ProtocolError(std::string(what) +
                        ": missing or unsupported protocol_version");
  }
}

}  // namespace arena::detail
