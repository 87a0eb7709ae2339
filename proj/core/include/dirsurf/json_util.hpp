#pragma once

// Strict JSON field access: unknown keys and wrong types raise ConfigError
// carrying the dotted path of the offending field.

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>

#include "dirsurf/common.hpp"
#include "dirsurf/errors.hpp"

namespace dirsurf::json_util {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_object(const json& j, const std::string& path);
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path);

template <typename T>
T get(const json& j, const char* key, const T& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join(path, key), std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(join(path, key), "missing required field");
  return get<T>(j, key, T{}, path);
}

/// 2 or 3 numbers; a missing z is 0.
Vec3 vec3(const json& j, const std::string& path);
json to_json(const Vec3& v, int dim);

}  // namespace dirsurf::json_util
