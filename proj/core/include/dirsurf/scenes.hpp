#pragma once

// Analytic ground-truth scenes: CSG signed distance trees, materials, lights,
// cameras, a sphere tracer and synthetic dataset generation.

#include <Eigen/Core>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/io.hpp"

namespace dirsurf::scenes {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double near = 0.0;
  double far = 1.0;
};

struct CsgNode {
  enum class Kind { Sphere, Box, HalfSpace, Union, Intersection, Difference };
  Kind kind = Kind::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  Vec3 half_extents = Vec3::Constant(0.5);
  Vec3 normal = Vec3::UnitZ();  ///< half-space: n.x - offset <= 0 is inside
  double offset = 0.0;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation_deg = Vec3::Zero();  ///< XYZ Euler angles; flatland uses z only
  std::vector<CsgNode> children;

  static CsgNode sphere(const Vec3& c, double r);
  static CsgNode box(const Vec3& c, const Vec3& half);
  static CsgNode half_space(const Vec3& n, double offset);
  static CsgNode make_union(std::vector<CsgNode> ch);
  static CsgNode make_intersection(std::vector<CsgNode> ch);
  static CsgNode make_difference(CsgNode a, CsgNode b);
};

struct SdfSample {
  double f = 0.0;
  Vec3 gradient = Vec3::Zero();
};

/// CSG of exact primitive distances. Union = min, intersection = max,
/// difference = max(a, -b); the gradient follows the active branch.
class AnalyticSdf {
 public:
  AnalyticSdf() = default;
  AnalyticSdf(int dim, CsgNode root) : dim_(dim), root_(std::move(root)) {}

  int dim() const { return dim_; }
  const CsgNode& root() const { return root_; }
  SdfSample eval(const Vec3& x) const;
  double value(const Vec3& x) const { return eval(x).f; }

 private:
  int dim_ = 3;
  CsgNode root_;
};

struct Material {
  Rgb albedo = Rgb::Constant(0.5);
  double specular = 0.0;
  double shininess = 32.0;
  double mirror = 0.0;  ///< weight of the environment reflection term
};

struct Light {
  Vec3 direction = Vec3::UnitZ();  ///< toward the light
  Rgb color = Rgb::Ones();
};

/// Procedural environment: sum of three exponential lobes on the direction sphere (circle in 2D).
struct Environment {
  struct Lobe {
    Vec3 axis;
    Rgb color;
    double sharpness;
  };
  std::vector<Lobe> lobes;

  static Environment standard();
  Rgb radiance(const Vec3& direction, int dim) const;
};

struct SceneSpec {
  std::string id;
  int dim = 2;
  AnalyticSdf sdf;
  Material material;
  std::vector<Light> lights;
  Rgb ambient = Rgb::Constant(0.05);
  Rgb background = Rgb::Zero();
  Environment environment = Environment::standard();
  double bound_radius = 1.0;
  bool diagnostic_only = false;  ///< unbounded scenes, not usable for datasets
};

std::vector<std::string> builtin_scene_ids();
/// Throws ConfigError naming the valid ids.
SceneSpec builtin_scene(const std::string& id);

nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j, const std::string& path = "scene");

/// Pinhole camera. Rotation columns are (right, down, forward), a proper rotation;
/// pixel rows grow downward. Flatland cameras have height 1.
struct Camera {
  int dim = 2;
  Vec3 position = Vec3::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double fov_deg = 45.0;  ///< horizontal field of view
  int width = 1;
  int height = 1;

  /// Primary ray through the pixel center; near/far clipped to the sphere of `bound_radius`.
  /// Returns nullopt when the ray misses that sphere.
  std::optional<Ray> ray(int px, int py, double bound_radius) const;
  Vec3 direction(int px, int py) const;
};

struct RigConfig {
  int views = 64;
  int width = 256;
  int height = 1;
  double distance = 2.5;
  double fov_deg = 0.0;  ///< 0: fit the bounding sphere
  double angle_offset_deg = 0.0;
};

/// Flatland: full circle of cameras looking at the origin.
std::vector<Camera> flatland_rig(const RigConfig& cfg, double bound_radius = 1.0);
/// 3D: spiral over the upper hemisphere plus a ring on the equator.
std::vector<Camera> sphere_rig(const RigConfig& cfg, double bound_radius = 1.0);
std::vector<Camera> default_rig(int dim, const RigConfig& cfg, double bound_radius = 1.0);
RigConfig default_rig_config(int dim);

nlohmann::json to_json(const Camera& c);
Camera camera_from_json(const nlohmann::json& j);

struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

inline constexpr int kTraceMaxSteps = 256;
inline constexpr double kTraceEpsilon = 1e-6;

std::optional<Hit> sphere_trace(const AnalyticSdf& sdf, const Ray& ray, int max_steps = kTraceMaxSteps,
                                double epsilon = kTraceEpsilon);

/// Blinn-Phong plus an optional mirror term sampling the environment; clamped to [0,1].
/// `view_dir` is the ray direction (pointing away from the camera).
Rgb shade(const Hit& hit, const Material& m, const std::vector<Light>& lights, const Rgb& ambient,
          const Environment& env, const Vec3& view_dir, int dim);

struct View {
  Camera camera;
  io::Image image;  ///< 3 channels
  io::Image mask;   ///< 1 channel, 0 or 1
};

struct Dataset {
  SceneSpec scene;
  std::vector<View> views;
  std::uint64_t seed = 0;
  double scale = 1.0;
};

/// Dataset generation traces more steps than the default so grazing rays still converge.
inline constexpr int kDatasetTraceSteps = 4096;

Dataset generate_dataset(const SceneSpec& scene, const std::vector<Camera>& rig, std::uint64_t seed, int workers = 1);

/// Layout: scene.json, view_####.ppm, mask_####.pgm, view_####.f64. Returns the written files.
std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

/// Ground-truth render of one view: color, mask, normals (3 channels, zero off-mask) and depth.
struct GroundTruthView {
  io::Image color;
  io::Image mask;
  io::Image normal;
  io::Image depth;
};
GroundTruthView render_ground_truth(const SceneSpec& scene, const Camera& cam, int max_steps = kDatasetTraceSteps);

}  // namespace dirsurf::scenes
