#pragma once

// Surface extraction (marching squares / cubes), point-set metrics, and the
// reflection-direction dispersion diagnostic.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/io.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/scenes.hpp"

namespace dirsurf::eval {

struct Bounds {
  int dim = 2;
  Vec3 lo = Vec3(-1, -1, 0);
  Vec3 hi = Vec3(1, 1, 0);

  double diagonal() const { return (hi - lo).head(dim).norm(); }
};

/// Axis-aligned cube [-half, half]^dim.
Bounds cube_bounds(int dim, double half = 1.0);

/// Batched field oracle: (dim x N) points -> N values. Must be safe to call concurrently.
using BatchSdf = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
BatchSdf analytic_oracle(const scenes::AnalyticSdf& sdf);
BatchSdf network_oracle(const nets::FieldBundle& bundle);

/// Segments are oriented with the inside (f < 0) on the left.
struct Polylines {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 2>> segments;
  int resolution = 0;

  /// Segments joined head to tail; closed chains repeat their first vertex at the end.
  std::vector<std::vector<int>> chains() const;
  double length() const;
};

/// Faces are wound counter-clockwise seen from outside (f > 0).
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  int resolution = 0;

  double area() const;
};

/// `resolution` cells per axis, so resolution + 1 samples per axis.
Polylines marching_squares(const BatchSdf& f, const Bounds& b, int resolution, int workers = 1);
Mesh marching_cubes(const BatchSdf& f, const Bounds& b, int resolution, int workers = 1);

/// Samples the field on the (resolution + 1)^dim lattice, x fastest.
Eigen::VectorXd sample_grid(const BatchSdf& f, const Bounds& b, int resolution, int workers = 1);

std::vector<Vec3> sample_polylines(const Polylines& p, int n, std::uint64_t seed);
std::vector<Vec3> sample_mesh(const Mesh& m, int n, std::uint64_t seed);
/// Uniform points in a thin band around the zero level set projected by 5 Newton steps.
std::vector<Vec3> sample_analytic_surface(const scenes::AnalyticSdf& sdf, const Bounds& b, int n, std::uint64_t seed);

/// Nearest-neighbour queries through a uniform grid.
class PointIndex {
 public:
  explicit PointIndex(std::span<const Vec3> points);
  double nearest_distance(const Vec3& q) const;

 private:
  std::vector<Vec3> points_;
  Vec3 origin_ = Vec3::Zero();
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<int> start_;
  std::vector<int> order_;
  std::array<int, 3> cell_of(const Vec3& p) const;
};

/// mean_{p in from} min_{q in to} |p - q|
double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to);
double chamfer_distance(std::span<const Vec3> p, std::span<const Vec3> q);
/// One-directional prediction -> ground truth mean distance.
double accuracy(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth);
double hausdorff_distance(std::span<const Vec3> p, std::span<const Vec3> q);
/// Mean angle in degrees between normalized normal vectors over pixels with mask > 0.5.
double normal_mae(const io::Image& predicted, const io::Image& ground_truth, const io::Image& mask);

/// Winding number of the oriented polylines around a 2D point (+1 inside for closed contours).
double winding_number(const Polylines& p, const Vec3& point);
bool contains(const Polylines& p, const Vec3& point);

inline constexpr std::array<double, 4> kDispersionBandEdges{0.0, 0.02, 0.1, 1e300};

struct DispersionBand {
  double lo = 0.0;
  double hi = 0.0;
  double spread_rad = 0.0;  ///< circular standard deviation of the reflection directions
  int samples = 0;
};

struct DispersionProfile {
  std::array<DispersionBand, 3> bands{};
  bool hit = false;
  Vec3 hit_normal = Vec3::Zero();
  std::vector<double> t;
  std::vector<double> f;
  std::vector<Vec3> reflection;
  std::vector<double> normal_deviation_deg;  ///< angle between n(x) and the hit normal (empty on a miss)
};

/// sqrt(-2 ln R), R the mean resultant length of the unit vectors; 0 for fewer than two.
double circular_spread(std::span<const Vec3> unit_vectors);

DispersionProfile reflection_dispersion(const scenes::AnalyticSdf& sdf, const scenes::Ray& ray,
                                        std::span<const double> t);

/// Per-ray profiles over a fan with `samples_per_ray` midpoint samples on [near, far],
/// plus the per-band spread averaged over the rays that have samples in that band.
struct FanDispersion {
  std::vector<DispersionProfile> rays;
  std::array<double, 3> mean_spread{};
  std::array<int, 3> rays_in_band{};
};
FanDispersion fan_dispersion(const scenes::AnalyticSdf& sdf, std::span<const scenes::Ray> rays, int samples_per_ray);

/// `n` rays from `origin` spread evenly over +-half_angle around the direction to `target`
/// (in the xy plane for 2D), clipped to the sphere of `bound_radius`.
std::vector<scenes::Ray> ray_fan(int dim, const Vec3& origin, const Vec3& target, double half_angle_deg, int n,
                                 double bound_radius);

void write_obj(const std::filesystem::path& path, const Mesh& m);
/// {"format": "dirsurf-polylines", "version": 1, "resolution": R, "polylines": [[[x, y], ...], ...]}
void write_polylines_json(const std::filesystem::path& path, const Polylines& p);

}  // namespace dirsurf::eval
