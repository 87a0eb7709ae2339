#include "dirsurf/json_util.hpp"

#include <algorithm>
#include <cstring>

namespace dirsurf::json_util {

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  require_object(j, path);
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return std::strcmp(k, item.key().c_str()) == 0; });
    if (!known) throw ConfigError(join(path, item.key()), "unknown key");
  }
}

Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() < 2 || j.size() > 3) throw ConfigError(path, "expected an array of 2 or 3 numbers");
  Vec3 v = Vec3::Zero();
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path, "expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

json to_json(const Vec3& v, int dim) {
  json a = json::array();
  for (int i = 0; i < dim; ++i) a.push_back(v[i]);
  return a;
}

}  // namespace dirsurf::json_util
