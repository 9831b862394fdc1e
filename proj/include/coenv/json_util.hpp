#pragma once

// Small nlohmann::json helpers shared by the serializers.  All engine JSON
// uses nlohmann's default std::map-backed type, so object keys serialize in
// sorted order and equal documents dump to identical bytes.  The require_*
// accessors turn schema violations into SerializationError with a field path
// instead of nlohmann's default exceptions.

#include "coenv/geometry.hpp"

#include <json.hpp>

#include <string>

namespace coenv {

using Json = nlohmann::json;  // std::map-backed: object keys iterate sorted

Json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j, const std::string& where);

Json quat_to_json(const Quat& q);  // [w, x, y, z]
Quat quat_from_json(const Json& j, const std::string& where);

/// {"t": [...], "q": [w,x,y,z]}; accepts {"t": [...], "rpy": [...]} too.
Json pose_to_json(const Pose& p);
Pose pose_from_json(const Json& j, const std::string& where);

Json shape_to_json(const Shape& s);
Shape shape_from_json(const Json& j, const std::string& where);

const Json& require_field(const Json& j, const std::string& key,
                          const std::string& where);
double require_number(const Json& j, const std::string& key,
                      const std::string& where);
std::string require_string(const Json& j, const std::string& key,
                           const std::string& where);

/// Throws SerializationError unless j["schema"] == expected.
void require_schema(const Json& j, const std::string& expected);

/// Parses text, mapping nlohmann parse errors to SerializationError.
Json parse_json(const std::string& text, const std::string& where);

/// Whole-file read/write with IoError on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace coenv
