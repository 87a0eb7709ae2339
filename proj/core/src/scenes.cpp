#include "dirsurf/scenes.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dirsurf/errors.hpp"
#include "dirsurf/json_util.hpp"

namespace dirsurf::scenes {

using json_util::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Leaves already-unit vectors untouched so that re-reading a written scene is exact.
Vec3 unit(const Vec3& v) {
  const double n = v.norm();
  return std::abs(n - 1.0) > 1e-12 ? Vec3(v / n) : v;
}

Eigen::Matrix3d rotation_matrix(const Vec3& deg) {
  return (Eigen::AngleAxisd(deg.z() * kDegToRad, Vec3::UnitZ()) *
          Eigen::AngleAxisd(deg.y() * kDegToRad, Vec3::UnitY()) *
          Eigen::AngleAxisd(deg.x() * kDegToRad, Vec3::UnitX()))
      .toRotationMatrix();
}

double sign_or_one(double v) { return v < 0.0 ? -1.0 : 1.0; }

SdfSample eval_node(const CsgNode& node, const Vec3& xw, int dim) {
  const bool rotated = !node.rotation_deg.isZero();
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  Vec3 x = xw - node.translation;
  if (rotated) {
    rot = rotation_matrix(node.rotation_deg);
    x = rot.transpose() * x;
  }
  SdfSample s;
  switch (node.kind) {
    case CsgNode::Kind::Sphere: {
      Vec3 p = Vec3::Zero();
      for (int i = 0; i < dim; ++i) p[i] = x[i] - node.center[i];
      const double len = p.norm();
      s.f = len - node.radius;
      s.gradient = len > 0.0 ? Vec3(p / len) : Vec3(Vec3::UnitX());
      break;
    }
    case CsgNode::Kind::Box: {
      Vec3 p = Vec3::Zero();
      Vec3 q = Vec3::Constant(-std::numeric_limits<double>::infinity());
      Vec3 outside = Vec3::Zero();
      for (int i = 0; i < dim; ++i) {
        p[i] = x[i] - node.center[i];
        q[i] = std::fabs(p[i]) - node.half_extents[i];
        outside[i] = std::max(q[i], 0.0);
      }
      const double out_len = outside.norm();
      int k = 0;
      for (int i = 1; i < dim; ++i)
        if (q[i] > q[k]) k = i;
      if (out_len > 0.0) {
        s.f = out_len;
        for (int i = 0; i < dim; ++i) s.gradient[i] = sign_or_one(p[i]) * outside[i] / out_len;
      } else {
        s.f = q[k];
        s.gradient[k] = sign_or_one(p[k]);
      }
      break;
    }
    case CsgNode::Kind::HalfSpace: {
      Vec3 n = Vec3::Zero();
      for (int i = 0; i < dim; ++i) n[i] = node.normal[i];
      n.normalize();
      s.f = n.dot(x) - node.offset;
      s.gradient = n;
      break;
    }
    case CsgNode::Kind::Union:
    case CsgNode::Kind::Intersection: {
      if (node.children.empty()) throw UsageError("CSG union/intersection without children");
      const bool is_union = node.kind == CsgNode::Kind::Union;
      s = eval_node(node.children.front(), x, dim);
      for (std::size_t c = 1; c < node.children.size(); ++c) {
        const SdfSample o = eval_node(node.children[c], x, dim);
        if (is_union ? o.f < s.f : o.f > s.f) s = o;
      }
      break;
    }
    case CsgNode::Kind::Difference: {
      if (node.children.size() != 2) throw UsageError("CSG difference needs exactly two children");
      const SdfSample a = eval_node(node.children[0], x, dim);
      const SdfSample b = eval_node(node.children[1], x, dim);
      if (a.f >= -b.f) {
        s = a;
      } else {
        s.f = -b.f;
        s.gradient = -b.gradient;
      }
      break;
    }
  }
  if (rotated) s.gradient = rot * s.gradient;
  return s;
}

const char* kind_name(CsgNode::Kind k) {
  switch (k) {
    case CsgNode::Kind::Sphere: return "sphere";
    case CsgNode::Kind::Box: return "box";
    case CsgNode::Kind::HalfSpace: return "halfspace";
    case CsgNode::Kind::Union: return "union";
    case CsgNode::Kind::Intersection: return "intersection";
    case CsgNode::Kind::Difference: return "difference";
  }
  return "sphere";
}

json node_to_json(const CsgNode& n, int dim) {
  using json_util::to_json;
  json j;
  j["type"] = kind_name(n.kind);
  switch (n.kind) {
    case CsgNode::Kind::Sphere:
      j["center"] = to_json(n.center, dim);
      j["radius"] = n.radius;
      break;
    case CsgNode::Kind::Box:
      j["center"] = to_json(n.center, dim);
      j["half_extents"] = to_json(n.half_extents, dim);
      break;
    case CsgNode::Kind::HalfSpace:
      j["normal"] = to_json(n.normal, dim);
      j["offset"] = n.offset;
      break;
    default:
      j["children"] = json::array();
      for (const auto& c : n.children) j["children"].push_back(node_to_json(c, dim));
  }
  if (!n.translation.isZero()) j["translate"] = to_json(n.translation, dim);
  if (!n.rotation_deg.isZero()) j["rotate_deg"] = to_json(n.rotation_deg, 3);
  return j;
}

CsgNode node_from_json(const json& j, const std::string& path) {
  using json_util::require;
  json_util::require_object(j, path);
  const auto type = require<std::string>(j, "type", path);
  CsgNode n;
  if (type == "sphere") {
    json_util::check_keys(j, {"type", "center", "radius", "translate", "rotate_deg"}, path);
    n.kind = CsgNode::Kind::Sphere;
    n.center = j.contains("center") ? json_util::vec3(j["center"], path + ".center") : Vec3::Zero();
    n.radius = require<double>(j, "radius", path);
    if (!(n.radius > 0.0)) throw ConfigError(path + ".radius", "must be positive");
  } else if (type == "box") {
    json_util::check_keys(j, {"type", "center", "half_extents", "translate", "rotate_deg"}, path);
    n.kind = CsgNode::Kind::Box;
    n.center = j.contains("center") ? json_util::vec3(j["center"], path + ".center") : Vec3::Zero();
    if (!j.contains("half_extents")) throw ConfigError(path + ".half_extents", "missing required field");
    n.half_extents = json_util::vec3(j["half_extents"], path + ".half_extents");
  } else if (type == "halfspace") {
    json_util::check_keys(j, {"type", "normal", "offset", "translate", "rotate_deg"}, path);
    n.kind = CsgNode::Kind::HalfSpace;
    if (!j.contains("normal")) throw ConfigError(path + ".normal", "missing required field");
    n.normal = json_util::vec3(j["normal"], path + ".normal");
    if (n.normal.norm() == 0.0) throw ConfigError(path + ".normal", "must be nonzero");
    n.offset = json_util::get<double>(j, "offset", 0.0, path);
  } else if (type == "union" || type == "intersection" || type == "difference") {
    json_util::check_keys(j, {"type", "children", "translate", "rotate_deg"}, path);
    n.kind = type == "union" ? CsgNode::Kind::Union
                             : (type == "intersection" ? CsgNode::Kind::Intersection : CsgNode::Kind::Difference);
    if (!j.contains("children") || !j["children"].is_array() || j["children"].empty())
      throw ConfigError(path + ".children", "expected a non-empty array");
    for (std::size_t i = 0; i < j["children"].size(); ++i)
      n.children.push_back(node_from_json(j["children"][i], path + ".children[" + std::to_string(i) + "]"));
    if (n.kind == CsgNode::Kind::Difference && n.children.size() != 2)
      throw ConfigError(path + ".children", "difference needs exactly two children");
  } else {
    throw ConfigError(path + ".type", "unknown CSG node type '" + type + "'");
  }
  if (j.contains("translate")) n.translation = json_util::vec3(j["translate"], path + ".translate");
  if (j.contains("rotate_deg")) n.rotation_deg = json_util::vec3(j["rotate_deg"], path + ".rotate_deg");
  return n;
}

json rgb_json(const Rgb& c) { return json::array({c.x(), c.y(), c.z()}); }

Rgb rgb_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected [r, g, b]");
  return Rgb(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Material specular_material() {
  Material m;
  m.albedo = Rgb(0.12, 0.12, 0.14);
  m.specular = 0.6;
  m.shininess = 60.0;
  m.mirror = 0.85;
  return m;
}

Material diffuse_material() {
  Material m;
  m.albedo = Rgb(0.75, 0.5, 0.3);
  m.specular = 0.0;
  m.shininess = 1.0;
  m.mirror = 0.0;
  return m;
}

std::vector<Light> default_lights(int dim) {
  if (dim == 2) return {{Vec3(0.6, 0.8, 0.0), Rgb(0.8, 0.8, 0.75)}, {Vec3(-0.9, -0.2, 0.0).normalized(), Rgb(0.3, 0.35, 0.45)}};
  return {{Vec3(0.4, 0.5, 0.75).normalized(), Rgb(0.8, 0.8, 0.75)}, {Vec3(-0.7, -0.3, 0.2).normalized(), Rgb(0.3, 0.35, 0.45)}};
}

SceneSpec base_scene(const std::string& id, int dim, CsgNode root, Material m) {
  SceneSpec s;
  s.id = id;
  s.dim = dim;
  s.sdf = AnalyticSdf(dim, std::move(root));
  s.material = m;
  s.lights = default_lights(dim);
  return s;
}

}  // namespace

CsgNode CsgNode::sphere(const Vec3& c, double r) {
  CsgNode n;
  n.kind = Kind::Sphere;
  n.center = c;
  n.radius = r;
  return n;
}
CsgNode CsgNode::box(const Vec3& c, const Vec3& half) {
  CsgNode n;
  n.kind = Kind::Box;
  n.center = c;
  n.half_extents = half;
  return n;
}
CsgNode CsgNode::half_space(const Vec3& normal, double offset) {
  CsgNode n;
  n.kind = Kind::HalfSpace;
  n.normal = normal;
  n.offset = offset;
  return n;
}
CsgNode CsgNode::make_union(std::vector<CsgNode> ch) {
  CsgNode n;
  n.kind = Kind::Union;
  n.children = std::move(ch);
  return n;
}
CsgNode CsgNode::make_intersection(std::vector<CsgNode> ch) {
  CsgNode n;
  n.kind = Kind::Intersection;
  n.children = std::move(ch);
  return n;
}
CsgNode CsgNode::make_difference(CsgNode a, CsgNode b) {
  CsgNode n;
  n.kind = Kind::Difference;
  n.children = {std::move(a), std::move(b)};
  return n;
}

SdfSample AnalyticSdf::eval(const Vec3& x) const { return eval_node(root_, x, dim_); }

Environment Environment::standard() {
  Environment e;
  e.lobes = {{Vec3(1.0, 0.3, 0.5).normalized(), Rgb(1.0, 0.6, 0.2), 6.0},
             {Vec3(-0.6, 0.8, 0.2).normalized(), Rgb(0.2, 0.5, 1.0), 6.0},
             {Vec3(-0.3, -0.9, 0.6).normalized(), Rgb(0.3, 0.9, 0.3), 6.0}};
  return e;
}

Rgb Environment::radiance(const Vec3& direction, int dim) const {
  Vec3 d = direction;
  if (dim == 2) d.z() = 0.0;
  d.normalize();
  Rgb out = Rgb::Zero();
  for (const auto& lobe : lobes) {
    Vec3 a = lobe.axis;
    if (dim == 2) a.z() = 0.0;
    a.normalize();
    out += lobe.color * std::exp(lobe.sharpness * (d.dot(a) - 1.0));
  }
  return out;
}

std::vector<std::string> builtin_scene_ids() {
  return {"flat2d-disk", "flat2d-lshape", "flat2d-blob", "flat2d-halfplane", "sphere3d", "bowl3d", "halfspace3d"};
}

SceneSpec builtin_scene(const std::string& id) {
  if (id == "flat2d-disk") return base_scene(id, 2, CsgNode::sphere(Vec3::Zero(), 0.5), specular_material());
  if (id == "flat2d-lshape") {
    // Square with its upper-right quadrant removed; the notch opens toward +x/+y.
    auto outer = CsgNode::box(Vec3::Zero(), Vec3(0.55, 0.55, 0.0));
    auto notch = CsgNode::box(Vec3(0.25, 0.25, 0.0), Vec3(0.35, 0.35, 0.0));
    return base_scene(id, 2, CsgNode::make_difference(outer, notch), specular_material());
  }
  if (id == "flat2d-blob") {
    return base_scene(id, 2,
                      CsgNode::make_union({CsgNode::sphere(Vec3(-0.2, -0.1, 0.0), 0.35),
                                           CsgNode::sphere(Vec3(0.25, 0.0, 0.0), 0.3),
                                           CsgNode::sphere(Vec3(0.0, 0.3, 0.0), 0.25)}),
                      diffuse_material());
  }
  if (id == "flat2d-halfplane") {
    SceneSpec s = base_scene(id, 2, CsgNode::half_space(Vec3::UnitY(), 0.0), specular_material());
    s.diagnostic_only = true;
    return s;
  }
  if (id == "sphere3d") return base_scene(id, 3, CsgNode::sphere(Vec3::Zero(), 0.5), specular_material());
  if (id == "bowl3d") {
    auto shell = CsgNode::make_difference(CsgNode::sphere(Vec3::Zero(), 0.6), CsgNode::sphere(Vec3::Zero(), 0.5));
    return base_scene(id, 3, CsgNode::make_intersection({shell, CsgNode::half_space(Vec3::UnitZ(), 0.15)}),
                      specular_material());
  }
  if (id == "halfspace3d") {
    SceneSpec s = base_scene(id, 3, CsgNode::half_space(Vec3::UnitZ(), 0.0), specular_material());
    s.diagnostic_only = true;
    return s;
  }
  std::string valid;
  for (const auto& v : builtin_scene_ids()) valid += (valid.empty() ? "" : ", ") + v;
  throw ConfigError("scene", "unknown scene id '" + id + "'; valid ids: " + valid);
}

json to_json(const SceneSpec& s) {
  json j;
  j["id"] = s.id;
  j["dim"] = s.dim;
  j["sdf"] = node_to_json(s.sdf.root(), s.dim);
  j["material"] = {{"albedo", rgb_json(s.material.albedo)},
                   {"specular", s.material.specular},
                   {"shininess", s.material.shininess},
                   {"mirror", s.material.mirror}};
  j["lights"] = json::array();
  for (const auto& l : s.lights)
    j["lights"].push_back({{"direction", json_util::to_json(l.direction, s.dim)}, {"color", rgb_json(l.color)}});
  j["ambient"] = rgb_json(s.ambient);
  j["background"] = rgb_json(s.background);
  j["environment"] = json::array();
  for (const auto& lobe : s.environment.lobes)
    j["environment"].push_back(
        {{"axis", json_util::to_json(lobe.axis, 3)}, {"color", rgb_json(lobe.color)}, {"sharpness", lobe.sharpness}});
  j["bound_radius"] = s.bound_radius;
  if (s.diagnostic_only) j["diagnostic_only"] = true;
  return j;
}

SceneSpec scene_from_json(const json& j, const std::string& path) {
  using json_util::get;
  if (j.is_string()) return builtin_scene(j.get<std::string>());
  json_util::check_keys(j,
                        {"id", "dim", "sdf", "material", "lights", "ambient", "background", "environment",
                         "bound_radius", "diagnostic_only", "base"},
                        path);
  SceneSpec s;
  if (j.contains("base")) s = builtin_scene(json_util::require<std::string>(j, "base", path));
  s.id = get<std::string>(j, "id", s.id.empty() ? "custom" : s.id, path);
  s.dim = get<int>(j, "dim", s.dim, path);
  if (s.dim != 2 && s.dim != 3) throw ConfigError(path + ".dim", "must be 2 or 3");
  if (j.contains("sdf")) s.sdf = AnalyticSdf(s.dim, node_from_json(j["sdf"], path + ".sdf"));
  else if (!j.contains("base")) throw ConfigError(path + ".sdf", "missing required field");
  else s.sdf = AnalyticSdf(s.dim, s.sdf.root());
  if (j.contains("material")) {
    const auto& m = j["material"];
    const std::string mp = path + ".material";
    json_util::check_keys(m, {"albedo", "specular", "shininess", "mirror"}, mp);
    if (m.contains("albedo")) s.material.albedo = rgb_from(m["albedo"], mp + ".albedo");
    s.material.specular = get<double>(m, "specular", s.material.specular, mp);
    s.material.shininess = get<double>(m, "shininess", s.material.shininess, mp);
    s.material.mirror = get<double>(m, "mirror", s.material.mirror, mp);
    if ((s.material.albedo.array() < 0.0).any() || (s.material.albedo.array() > 1.0).any())
      throw ConfigError(mp + ".albedo", "components must lie in [0, 1]");
    if (s.material.specular < 0.0) throw ConfigError(mp + ".specular", "must be >= 0");
    if (!(s.material.shininess > 0.0)) throw ConfigError(mp + ".shininess", "must be > 0");
  }
  if (j.contains("lights")) {
    s.lights.clear();
    for (std::size_t i = 0; i < j["lights"].size(); ++i) {
      const auto& l = j["lights"][i];
      const std::string lp = path + ".lights[" + std::to_string(i) + "]";
      json_util::check_keys(l, {"direction", "color"}, lp);
      Light light;
      light.direction = unit(json_util::vec3(l.at("direction"), lp + ".direction"));
      if (l.contains("color")) light.color = rgb_from(l["color"], lp + ".color");
      s.lights.push_back(light);
    }
  } else if (!j.contains("base")) {
    s.lights = default_lights(s.dim);
  }
  if (j.contains("ambient")) s.ambient = rgb_from(j["ambient"], path + ".ambient");
  if (j.contains("background")) s.background = rgb_from(j["background"], path + ".background");
  if (j.contains("environment")) {
    s.environment.lobes.clear();
    for (std::size_t i = 0; i < j["environment"].size(); ++i) {
      const auto& e = j["environment"][i];
      const std::string ep = path + ".environment[" + std::to_string(i) + "]";
      json_util::check_keys(e, {"axis", "color", "sharpness"}, ep);
      s.environment.lobes.push_back({unit(json_util::vec3(e.at("axis"), ep + ".axis")),
                                     rgb_from(e.at("color"), ep + ".color"), get<double>(e, "sharpness", 6.0, ep)});
    }
  }
  s.bound_radius = get<double>(j, "bound_radius", s.bound_radius, path);
  s.diagnostic_only = get<bool>(j, "diagnostic_only", s.diagnostic_only, path);
  return s;
}

Vec3 Camera::direction(int px, int py) const {
  const double tan_half = std::tan(0.5 * fov_deg * kDegToRad);
  const double u = ((px + 0.5) / width * 2.0 - 1.0) * tan_half;
  const double v = dim == 2 ? 0.0 : ((py + 0.5) / height * 2.0 - 1.0) * tan_half * height / width;
  return (rotation.col(2) + u * rotation.col(0) + v * rotation.col(1)).normalized();
}

std::optional<Ray> Camera::ray(int px, int py, double bound_radius) const {
  Ray r;
  r.origin = position;
  r.direction = direction(px, py);
  const double b = r.origin.dot(r.direction);
  const double c = r.origin.squaredNorm() - bound_radius * bound_radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  r.near = std::max(-b - sq, 0.0);
  r.far = -b + sq;
  if (r.far <= r.near) return std::nullopt;
  return r;
}

RigConfig default_rig_config(int dim) {
  RigConfig c;
  if (dim == 2) {
    c.views = 64;
    c.width = 256;
    c.height = 1;
    c.distance = 2.5;
  } else {
    c.views = 36;
    c.width = 64;
    c.height = 64;
    c.distance = 3.0;
  }
  return c;
}

namespace {
double fitted_fov(const RigConfig& cfg, double bound_radius) {
  if (cfg.fov_deg > 0.0) return cfg.fov_deg;
  if (cfg.distance <= bound_radius) throw ConfigError("rig.distance", "cameras must lie outside the bounding sphere");
  return 2.0 * std::asin(bound_radius / cfg.distance) / kDegToRad * 1.04;
}

Camera look_at(int dim, const Vec3& pos, const RigConfig& cfg, double fov) {
  Camera c;
  c.dim = dim;
  c.position = pos;
  c.fov_deg = fov;
  c.width = cfg.width;
  c.height = dim == 2 ? 1 : cfg.height;
  const Vec3 forward = (-pos).normalized();
  Vec3 right;
  if (dim == 2) {
    right = Vec3(forward.y(), -forward.x(), 0.0);
  } else {
    right = forward.cross(Vec3::UnitZ());
    if (right.norm() < 1e-9) right = Vec3::UnitX();
    right.normalize();
  }
  c.rotation.col(0) = right;
  c.rotation.col(1) = forward.cross(right).normalized();  // image-down, keeps det = +1
  c.rotation.col(2) = forward;
  return c;
}
}  // namespace

std::vector<Camera> flatland_rig(const RigConfig& cfg, double bound_radius) {
  if (cfg.views < 1 || cfg.width < 1) throw ConfigError("rig", "views and width must be positive");
  const double fov = fitted_fov(cfg, bound_radius);
  std::vector<Camera> cams;
  for (int k = 0; k < cfg.views; ++k) {
    const double a = 2.0 * std::numbers::pi * k / cfg.views + cfg.angle_offset_deg * kDegToRad;
    cams.push_back(look_at(2, cfg.distance * Vec3(std::cos(a), std::sin(a), 0.0), cfg, fov));
  }
  return cams;
}

std::vector<Camera> sphere_rig(const RigConfig& cfg, double bound_radius) {
  if (cfg.views < 2 || cfg.width < 1 || cfg.height < 1) throw ConfigError("rig", "need at least two views and positive size");
  const double fov = fitted_fov(cfg, bound_radius);
  const int equator = std::max(1, cfg.views / 3);
  const int spiral = cfg.views - equator;
  std::vector<Camera> cams;
  const double golden = 137.50776405 * kDegToRad;
  const double offset = cfg.angle_offset_deg * kDegToRad;
  for (int k = 0; k < spiral; ++k) {
    const double elev = (15.0 + 60.0 * (spiral > 1 ? k / double(spiral - 1) : 0.5)) * kDegToRad;
    const double az = k * golden + offset;
    const Vec3 dir(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev));
    cams.push_back(look_at(3, cfg.distance * dir, cfg, fov));
  }
  for (int k = 0; k < equator; ++k) {
    const double az = 2.0 * std::numbers::pi * (k + 0.5) / equator + offset;
    cams.push_back(look_at(3, cfg.distance * Vec3(std::cos(az), std::sin(az), 0.0), cfg, fov));
  }
  return cams;
}

std::vector<Camera> default_rig(int dim, const RigConfig& cfg, double bound_radius) {
  return dim == 2 ? flatland_rig(cfg, bound_radius) : sphere_rig(cfg, bound_radius);
}

json to_json(const Camera& c) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back(json::array({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)}));
  return {{"dim", c.dim},
          {"position", json::array({c.position.x(), c.position.y(), c.position.z()})},
          {"rotation", rot},
          {"fov_deg", c.fov_deg},
          {"width", c.width},
          {"height", c.height}};
}

Camera camera_from_json(const json& j) {
  json_util::check_keys(j, {"dim", "position", "rotation", "fov_deg", "width", "height"}, "camera");
  Camera c;
  c.dim = j.at("dim").get<int>();
  c.position = json_util::vec3(j.at("position"), "camera.position");
  const auto& rot = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(k)).get<double>();
  c.fov_deg = j.at("fov_deg").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

std::optional<Hit> sphere_trace(const AnalyticSdf& sdf, const Ray& ray, int max_steps, double epsilon) {
  double t = ray.near;
  for (int i = 0; i < max_steps && t <= ray.far; ++i) {
    const Vec3 p = ray.origin + t * ray.direction;
    const SdfSample s = sdf.eval(p);
    if (std::fabs(s.f) < epsilon) {
      Hit h;
      h.t = t;
      h.point = p;
      h.normal = s.gradient.normalized();
      return h;
    }
    t += s.f;
  }
  return std::nullopt;
}

Rgb shade(const Hit& hit, const Material& m, const std::vector<Light>& lights, const Rgb& ambient,
          const Environment& env, const Vec3& view_dir, int dim) {
  const Vec3 n = hit.normal.normalized();
  const Vec3 v = (-view_dir).normalized();
  Rgb c = ambient;
  for (const auto& light : lights) {
    const Vec3 l = light.direction.normalized();
    const double ndl = std::max(n.dot(l), 0.0);
    Rgb term = m.albedo * ndl;
    if (m.specular > 0.0) {
      const Vec3 h = (l + v).normalized();
      term += Rgb::Constant(m.specular * std::pow(std::max(n.dot(h), 0.0), m.shininess));
    }
    c += light.color.cwiseProduct(term);
  }
  if (m.mirror > 0.0) {
    const Vec3 r = 2.0 * n.dot(v) * n - v;
    c += m.mirror * env.radiance(r, dim);
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

GroundTruthView render_ground_truth(const SceneSpec& scene, const Camera& cam, int max_steps) {
  GroundTruthView g;
  g.color = io::Image(cam.width, cam.height, 3);
  g.mask = io::Image(cam.width, cam.height, 1);
  g.normal = io::Image(cam.width, cam.height, 3);
  g.depth = io::Image(cam.width, cam.height, 1);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Rgb color = scene.background;
      const auto ray = cam.ray(x, y, scene.bound_radius);
      if (ray) {
        if (const auto hit = sphere_trace(scene.sdf, *ray, max_steps)) {
          color = shade(*hit, scene.material, scene.lights, scene.ambient, scene.environment, ray->direction, scene.dim);
          g.mask.at(x, y, 0) = 1.0;
          for (int c = 0; c < 3; ++c) g.normal.at(x, y, c) = hit->normal[c];
          g.depth.at(x, y, 0) = hit->t;
        }
      }
      for (int c = 0; c < 3; ++c) g.color.at(x, y, c) = color[c];
    }
  }
  return g;
}

Dataset generate_dataset(const SceneSpec& scene, const std::vector<Camera>& rig, std::uint64_t seed, int workers) {
  if (scene.diagnostic_only) throw ConfigError("scene", "scene '" + scene.id + "' is unbounded and only usable for diagnostics");
  Dataset ds;
  ds.scene = scene;
  ds.seed = seed;
  ds.views.resize(rig.size());
  parallel_for(rig.size(), workers, [&](std::size_t i) {
    const GroundTruthView g = render_ground_truth(scene, rig[i]);
    ds.views[i] = View{rig[i], g.color, g.mask};
  });
  return ds;
}

std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  json j;
  j["format"] = "dirsurf-dataset";
  j["version"] = 1;
  j["scene"] = to_json(ds.scene);
  j["seed"] = ds.seed;
  j["scale"] = ds.scale;
  j["background"] = rgb_json(ds.scene.background);
  j["views"] = json::array();
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu", i);
    const std::string image = std::string("view_") + stem + ".ppm";
    const std::string mask = std::string("mask_") + stem + ".pgm";
    const std::string raw = std::string("view_") + stem + ".f64";
    io::write_ppm(dir / image, ds.views[i].image);
    io::write_pgm(dir / mask, ds.views[i].mask);
    io::write_f64(dir / raw, ds.views[i].image);
    files.insert(files.end(), {dir / image, dir / mask, dir / raw});
    j["views"].push_back({{"camera", to_json(ds.views[i].camera)}, {"image", image}, {"mask", mask}, {"raw", raw}});
  }
  io::write_text(dir / "scene.json", j.dump(2) + "\n");
  files.insert(files.begin(), dir / "scene.json");
  return files;
}

Dataset read_dataset(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(io::read_text(dir / "scene.json"));
  } catch (const json::exception& e) {
    throw IoError("bad scene.json in " + dir.string() + ": " + e.what());
  }
  if (j.value("format", "") != "dirsurf-dataset") throw IoError("not a dataset directory: " + dir.string());
  Dataset ds;
  ds.scene = scene_from_json(j.at("scene"), "scene");
  ds.seed = j.value("seed", std::uint64_t{0});
  ds.scale = j.value("scale", 1.0);
  for (const auto& v : j.at("views")) {
    View view;
    view.camera = camera_from_json(v.at("camera"));
    view.image = io::read_f64(dir / v.at("raw").get<std::string>());
    view.mask = io::read_pgm(dir / v.at("mask").get<std::string>());
    for (double& m : view.mask.data) m = m > 0.5 ? 1.0 : 0.0;
    if (view.image.width != view.camera.width || view.image.height != view.camera.height)
      throw IoError("image size does not match its camera in " + dir.string());
    ds.views.push_back(std::move(view));
  }
  return ds;
}

}  // namespace dirsurf::scenes
