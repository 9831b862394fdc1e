#include "coenv/json_util.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace coenv {

namespace {

void check_array(const Json& j, size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": expected array of " + std::to_string(n) +
                          " numbers");
  }
  for (const auto& e : j) {
    if (!e.is_number()) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": expected numeric entries");
    }
  }
}

}  // namespace

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j, const std::string& where) {
  check_array(j, 3, where);
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json quat_to_json(const Quat& q) {
  return Json::array({q.w(), q.x(), q.y(), q.z()});
}

Quat quat_from_json(const Json& j, const std::string& where) {
  check_array(j, 4, where);
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
         j[3].get<double>());
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": quaternion is not unit length");
  }
  return canonical_quat(q);
}

Json pose_to_json(const Pose& p) {
  Json j;
  j["t"] = vec3_to_json(p.translation);
  j["q"] = quat_to_json(p.rotation);
  return j;
}

Pose pose_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": expected pose object");
  }
  Vec3 t = j.contains("t") ? vec3_from_json(j["t"], where + ".t") : Vec3::Zero();
  if (j.contains("q")) {
    return Pose(t, quat_from_json(j["q"], where + ".q"));
  }
  if (j.contains("rpy")) {
    Vec3 rpy = vec3_from_json(j["rpy"], where + ".rpy");
    return Pose::from_rpy(t, rpy[0], rpy[1], rpy[2]);
  }
  return Pose::from_translation(t);
}

Json shape_to_json(const Shape& s) {
  Json j;
  switch (s.type) {
    case ShapeType::Box:
      j["type"] = "box";
      j["size"] = vec3_to_json(s.size);
      break;
    case ShapeType::Cylinder:
      j["type"] = "cylinder";
      j["radius"] = s.size[0];
      j["height"] = s.size[1];
      break;
    case ShapeType::Sphere:
      j["type"] = "sphere";
      j["radius"] = s.size[0];
      break;
  }
  return j;
}

Shape shape_from_json(const Json& j, const std::string& where) {
  std::string type = require_string(j, "type", where);
  if (type == "box") {
    Vec3 size = vec3_from_json(require_field(j, "size", where), where + ".size");
    if (size.minCoeff() <= 0.0) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": box extents must be positive");
    }
    return Shape::box(size[0], size[1], size[2]);
  }
  if (type == "cylinder") {
    double r = require_number(j, "radius", where);
    double h = require_number(j, "height", where);
    if (r <= 0.0 || h <= 0.0) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": cylinder dimensions must be positive");
    }
    return Shape::cylinder(r, h);
  }
  if (type == "sphere") {
    double r = require_number(j, "radius", where);
    if (r <= 0.0) {
      throw EngineError(EngineError::Kind::SerializationError,
                        where + ": sphere radius must be positive");
    }
    return Shape::sphere(r);
  }
  throw EngineError(EngineError::Kind::SerializationError,
                    where + ": unknown shape type '" + type + "'");
}

const Json& require_field(const Json& j, const std::string& key,
                          const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": missing field '" + key + "'");
  }
  return j.at(key);
}

double require_number(const Json& j, const std::string& key,
                      const std::string& where) {
  const Json& f = require_field(j, key, where);
  if (!f.is_number()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": field '" + key + "' must be a number");
  }
  return f.get<double>();
}

std::string require_string(const Json& j, const std::string& key,
                           const std::string& where) {
  const Json& f = require_field(j, key, where);
  if (!f.is_string()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": field '" + key + "' must be a string");
  }
  return f.get<std::string>();
}

void require_schema(const Json& j, const std::string& expected) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string() ||
      j["schema"].get<std::string>() != expected) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "document does not declare schema '" + expected + "'");
  }
}

Json parse_json(const std::string& text, const std::string& where) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      where + ": malformed JSON");
  }
  return j;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw EngineError(EngineError::Kind::IoError,
                      "cannot open '" + path + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw EngineError(EngineError::Kind::IoError,
                      "cannot open '" + path + "' for writing");
  }
  out << content;
  if (!out.good()) {
    throw EngineError(EngineError::Kind::IoError,
                      "short write to '" + path + "'");
  }
}

}  // namespace coenv
