#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <numbers>

#include "dirsurf/errors.hpp"
#include "dirsurf/eval.hpp"
#include "dirsurf/scenes.hpp"
#include "support.hpp"

using namespace dirsurf;
using namespace dirsurf::eval;
using scenes::AnalyticSdf;
using scenes::CsgNode;

namespace {
std::vector<Vec3> circle_points(double r, int n, const Vec3& c = Vec3::Zero()) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + 0.5) / n;
    pts.push_back(c + r * Vec3(std::cos(a), std::sin(a), 0));
  }
  return pts;
}

BatchSdf constant_field(double v) {
  return [v](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Constant(x.cols(), v); };
}

BatchSdf negated(const BatchSdf& f) {
  return [f](const Eigen::MatrixXd& x) { return Eigen::VectorXd(-f(x)); };
}

double brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, (p - q).norm());
  return best;
}

io::Image normal_map(const std::vector<Vec3>& normals) {
  io::Image img(static_cast<int>(normals.size()), 1, 3);
  for (int x = 0; x < img.width; ++x)
    for (int c = 0; c < 3; ++c) img.at(x, 0, c) = normals[static_cast<std::size_t>(x)][c];
  return img;
}
}  // namespace

TEST_CASE("marching squares on a circle") {
  const AnalyticSdf circle(2, CsgNode::sphere(Vec3::Zero(), 0.5));
  const auto p = marching_squares(analytic_oracle(circle), cube_bounds(2), 256);
  REQUIRE(!p.segments.empty());
  CHECK(p.resolution == 256);
  double worst = 0.0;
  for (const auto& v : p.vertices) worst = std::max(worst, std::fabs(v.norm() - 0.5));
  CHECK(worst < 5e-3);
  CHECK(p.length() == doctest::Approx(std::numbers::pi).epsilon(2e-3));

  const auto chains = p.chains();
  REQUIRE(chains.size() == 1);
  CHECK(chains[0].front() == chains[0].back());
  CHECK(winding_number(p, Vec3::Zero()) == doctest::Approx(1.0));
  CHECK(winding_number(p, Vec3(0.8, 0, 0)) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(contains(p, Vec3(0.1, 0.2, 0)));
  CHECK_FALSE(contains(p, Vec3(0.6, 0.0, 0)));

  // Inside on the left means counter-clockwise travel: tangent x radius points along -z.
  for (const auto& s : p.segments) {
    const Vec3 a = p.vertices[static_cast<std::size_t>(s[0])], b = p.vertices[static_cast<std::size_t>(s[1])];
    CHECK((b - a).cross(0.5 * (a + b)).z() < 0.0);
    CHECK((b - a).norm() > 1e-12);
  }
}

TEST_CASE("marching squares: empty and sign-flipped fields") {
  CHECK(marching_squares(constant_field(1.0), cube_bounds(2), 32).segments.empty());
  CHECK(marching_squares(constant_field(-1.0), cube_bounds(2), 32).segments.empty());
  CHECK_THROWS(marching_squares(constant_field(1.0), cube_bounds(3), 32));

  const AnalyticSdf l = scenes::builtin_scene("flat2d-lshape").sdf;
  const auto a = marching_squares(analytic_oracle(l), cube_bounds(2), 128);
  const auto b = marching_squares(negated(analytic_oracle(l)), cube_bounds(2), 128);
  REQUIRE(a.segments.size() == b.segments.size());
  auto key = [](const Vec3& v) { return std::make_pair(std::lround(v.x() * 1e9), std::lround(v.y() * 1e9)); };
  // Same vertex set, opposite segment direction.
  std::map<std::pair<std::pair<long, long>, std::pair<long, long>>, int> fwd;
  for (const auto& s : a.segments) ++fwd[{key(a.vertices[s[0]]), key(a.vertices[s[1]])}];
  for (const auto& s : b.segments) CHECK(fwd.count({key(b.vertices[s[1]]), key(b.vertices[s[0]])}) == 1);
  CHECK(winding_number(a, Vec3(-0.3, -0.3, 0)) == doctest::Approx(1.0));
  CHECK(winding_number(b, Vec3(-0.3, -0.3, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("extraction residual is below the cell diagonal on analytic scenes") {
  for (const char* id : {"flat2d-disk", "flat2d-lshape", "flat2d-blob", "flat2d-halfplane"}) {
    const auto s = scenes::builtin_scene(id);
    const Bounds b = cube_bounds(2);
    const auto p = marching_squares(analytic_oracle(s.sdf), b, 256);
    REQUIRE(!p.vertices.empty());
    double worst = 0.0;
    for (const auto& v : p.vertices) worst = std::max(worst, std::fabs(s.sdf.value(v)));
    CHECK(worst < b.diagonal() / 256);
  }
  for (const char* id : {"sphere3d", "bowl3d"}) {
    const auto s = scenes::builtin_scene(id);
    const Bounds b = cube_bounds(3);
    const auto m = marching_cubes(analytic_oracle(s.sdf), b, 64);
    REQUIRE(!m.vertices.empty());
    double worst = 0.0;
    for (const auto& v : m.vertices) worst = std::max(worst, std::fabs(s.sdf.value(v)));
    CHECK(worst < b.diagonal() / 64);
  }
}

TEST_CASE("marching cubes on a sphere: accuracy, closedness, area and orientation") {
  const AnalyticSdf sphere(3, CsgNode::sphere(Vec3::Zero(), 0.5));
  const auto m = marching_cubes(analytic_oracle(sphere), cube_bounds(3), 128);
  REQUIRE(!m.faces.empty());
  double worst = 0.0;
  for (const auto& v : m.vertices) worst = std::max(worst, std::fabs(v.norm() - 0.5));
  CHECK(worst < 1e-2);
  CHECK(std::fabs(m.area() - std::numbers::pi) / std::numbers::pi < 0.05);

  std::map<std::pair<int, int>, int> edge_use;
  int inward = 0;
  for (const auto& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[static_cast<std::size_t>(k)], b = f[static_cast<std::size_t>((k + 1) % 3)];
      ++edge_use[{std::min(a, b), std::max(a, b)}];
    }
    const Vec3 &a = m.vertices[static_cast<std::size_t>(f[0])], &b = m.vertices[static_cast<std::size_t>(f[1])],
               &c = m.vertices[static_cast<std::size_t>(f[2])];
    const Vec3 n = (b - a).cross(c - a);
    CHECK(n.norm() > 1e-12);
    if (n.dot(a + b + c) <= 0.0) ++inward;
  }
  CHECK(inward == 0);
  bool closed = true;
  for (const auto& [e, count] : edge_use) closed = closed && count == 2;
  CHECK(closed);

  CHECK(marching_cubes(constant_field(-1.0), cube_bounds(3), 16).faces.empty());
  CHECK(marching_cubes(constant_field(1.0), cube_bounds(3), 16).faces.empty());
}

TEST_CASE("marching cubes is deterministic across worker counts") {
  const auto s = scenes::builtin_scene("bowl3d");
  const auto a = marching_cubes(analytic_oracle(s.sdf), cube_bounds(3), 40, 1);
  const auto b = marching_cubes(analytic_oracle(s.sdf), cube_bounds(3), 40, 3);
  CHECK(a.vertices == b.vertices);
  CHECK(a.faces == b.faces);
}

TEST_CASE("chamfer distance examples") {
  const auto p = circle_points(0.5, 10000), q = circle_points(0.6, 10000);
  CHECK(chamfer_distance(p, p) == 0.0);
  CHECK(std::fabs(chamfer_distance(p, q) - 0.1) < 1e-3);
  CHECK(chamfer_distance(p, q) == chamfer_distance(q, p));
  CHECK(std::fabs(hausdorff_distance(p, q) - 0.1) < 1e-3);
  CHECK(std::fabs(accuracy(q, p) - 0.1) < 1e-3);

  const std::vector<Vec3> none;
  CHECK_THROWS_AS(chamfer_distance(p, none), UsageError);
  CHECK_THROWS_AS(chamfer_distance(none, p), UsageError);

  // Accuracy is one-directional: a prediction covering only part of the truth still scores 0.
  std::vector<Vec3> half(p.begin(), p.begin() + 5000);
  CHECK(accuracy(half, p) == 0.0);
  CHECK(chamfer_distance(half, p) > 0.0);
}

TEST_CASE("chamfer distance obeys the relaxed triangle bound") {
  Rng rng(8);
  std::uniform_real_distribution<double> c(-0.2, 0.2), r(0.2, 0.6);
  for (int i = 0; i < 30; ++i) {
    const int n = 2000;
    const auto a = circle_points(r(rng), n, Vec3(c(rng), c(rng), 0));
    const auto b = circle_points(r(rng), n, Vec3(c(rng), c(rng), 0));
    const auto d = circle_points(r(rng), n, Vec3(c(rng), c(rng), 0));
    const double spacing = 2.0 * std::numbers::pi * 0.6 / n;
    CHECK(chamfer_distance(a, d) <= chamfer_distance(a, b) + chamfer_distance(b, d) + 2.0 * spacing);
  }
}

TEST_CASE("grid nearest-neighbour index agrees with brute force") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int dim : {2, 3}) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 3000; ++i) pts.emplace_back(u(rng), u(rng), dim == 3 ? u(rng) : 0.0);
    const PointIndex index(pts);
    for (int i = 0; i < 300; ++i) {
      const Vec3 q(1.5 * u(rng), 1.5 * u(rng), dim == 3 ? 1.5 * u(rng) : 0.0);
      CHECK(index.nearest_distance(q) == brute_nearest(pts, q));
    }
  }
  // Clustered points with a distant outlier stress the cell sizing.
  std::vector<Vec3> clustered;
  for (int i = 0; i < 500; ++i) clustered.emplace_back(1e-3 * u(rng), 1e-3 * u(rng), 0);
  clustered.emplace_back(50, 50, 0);
  const PointIndex ci(clustered);
  for (int i = 0; i < 50; ++i) {
    const Vec3 q(u(rng), u(rng), 0);
    CHECK(ci.nearest_distance(q) == brute_nearest(clustered, q));
  }
}

TEST_CASE("surface sampling") {
  const auto s = scenes::builtin_scene("flat2d-lshape");
  const auto gt = sample_analytic_surface(s.sdf, cube_bounds(2), 5000, 1);
  CHECK(gt.size() == 5000);
  for (const auto& p : gt) CHECK(std::fabs(s.sdf.value(p)) < 1e-9);
  CHECK(gt == sample_analytic_surface(s.sdf, cube_bounds(2), 5000, 1));

  const auto poly = marching_squares(analytic_oracle(s.sdf), cube_bounds(2), 256);
  const auto sp = sample_polylines(poly, 5000, 2);
  CHECK(sp.size() == 5000);
  CHECK(chamfer_distance(sp, gt) < 2e-3);

  const auto sphere = scenes::builtin_scene("sphere3d");
  const auto mesh = marching_cubes(analytic_oracle(sphere.sdf), cube_bounds(3), 64);
  const auto sm = sample_mesh(mesh, 20000, 3);
  CHECK(sm.size() == 20000);
  const auto sgt = sample_analytic_surface(sphere.sdf, cube_bounds(3), 20000, 4);
  CHECK(chamfer_distance(sm, sgt) < 1e-2);
  // Area-weighted sampling: the mean of points on a centered sphere is near the origin.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : sm) mean += p / static_cast<double>(sm.size());
  CHECK(mean.norm() < 0.01);
}

TEST_CASE("normal MAE examples") {
  Rng rng(10);
  std::vector<Vec3> base, rotated, orth;
  const double a = 10.0 * std::numbers::pi / 180.0;
  for (int i = 0; i < 256; ++i) {
    const Vec3 n = testing::random_unit(rng, 2);
    base.push_back(n);
    rotated.emplace_back(std::cos(a) * n.x() - std::sin(a) * n.y(), std::sin(a) * n.x() + std::cos(a) * n.y(), 0);
    orth.emplace_back(-n.y(), n.x(), 0);
  }
  io::Image mask(256, 1, 1);
  for (int x = 0; x < 256; ++x) mask.at(x, 0, 0) = 1.0;
  CHECK(normal_mae(normal_map(base), normal_map(base), mask) < 1e-6);
  CHECK(std::fabs(normal_mae(normal_map(rotated), normal_map(base), mask) - 10.0) < 1e-6);
  CHECK(std::fabs(normal_mae(normal_map(orth), normal_map(base), mask) - 90.0) < 1e-9);

  // Unmasked pixels do not count.
  io::Image half = mask;
  for (int x = 0; x < 128; ++x) half.at(x, 0, 0) = 0.0;
  auto mixed = base;
  for (int x = 0; x < 128; ++x) mixed[static_cast<std::size_t>(x)] = orth[static_cast<std::size_t>(x)];
  CHECK(normal_mae(normal_map(mixed), normal_map(base), half) < 1e-6);
}

TEST_CASE("reflection dispersion diagnostic") {
  SUBCASE("half-plane: every spread is zero") {
    const auto s = scenes::builtin_scene("flat2d-halfplane");
    const auto rays = ray_fan(2, Vec3(0.3, 1.5, 0), Vec3(0, 0, 0), 30.0, 32, 2.0);
    const auto fan = fan_dispersion(s.sdf, rays, 256);
    for (const auto& r : fan.rays)
      for (const auto& b : r.bands) CHECK(b.spread_rad == 0.0);
  }
  SUBCASE("L-shape notch: far-band spread at least twice the near band") {
    const auto s = scenes::builtin_scene("flat2d-lshape");
    const auto rays = ray_fan(2, Vec3(1.5, 1.5, 0), Vec3(-0.1, -0.1, 0), 12.0, 32, 2.0);
    const auto fan = fan_dispersion(s.sdf, rays, 256);
    for (const auto& r : fan.rays) CHECK(r.hit);
    CHECK(fan.rays_in_band[0] == 32);
    CHECK(fan.rays_in_band[2] == 32);
    CHECK(fan.mean_spread[2] >= 2.0 * fan.mean_spread[0]);
    CHECK(fan.mean_spread[2] > 0.1);
    const auto again = fan_dispersion(s.sdf, rays, 256);
    CHECK(again.mean_spread == fan.mean_spread);
  }
  SUBCASE("sphere: near band tighter than far band") {
    const auto s = scenes::builtin_scene("sphere3d");
    const auto rays = ray_fan(3, Vec3(0, 0, 2.0), Vec3(0, 0, 0), 10.0, 16, 1.0);
    const auto fan = fan_dispersion(s.sdf, rays, 512);
    CHECK(fan.mean_spread[0] < fan.mean_spread[2]);
  }
  SUBCASE("circular spread") {
    const std::vector<Vec3> same(5, Vec3(0, 1, 0));
    CHECK(circular_spread(same) == 0.0);
    CHECK(circular_spread(std::vector<Vec3>{Vec3(1, 0, 0)}) == 0.0);
    const std::vector<Vec3> two{Vec3(1, 0, 0), Vec3(0, 1, 0)};
    CHECK(circular_spread(two) == doctest::Approx(std::sqrt(-2.0 * std::log(std::sqrt(0.5)))));
  }
}

TEST_CASE("ray fan geometry") {
  const auto rays = ray_fan(2, Vec3(2, 0, 0), Vec3(0, 0, 0), 20.0, 5, 1.0);
  REQUIRE(rays.size() == 5);
  CHECK((rays[2].direction - Vec3(-1, 0, 0)).norm() < 1e-15);
  const double a = std::acos(rays[0].direction.dot(Vec3(-1, 0, 0))) * 180.0 / std::numbers::pi;
  CHECK(a == doctest::Approx(20.0));
  CHECK(rays[2].near == doctest::Approx(1.0));
  CHECK(rays[2].far == doctest::Approx(3.0));
  CHECK_THROWS_AS(ray_fan(2, Vec3(2, 0, 0), Vec3::Zero(), 10.0, 0, 1.0), UsageError);
}

TEST_CASE("polylines and meshes serialize") {
  const AnalyticSdf circle(2, CsgNode::sphere(Vec3::Zero(), 0.5));
  const auto p = marching_squares(analytic_oracle(circle), cube_bounds(2), 32);
  const auto dir = testing::scratch_dir("eval_io");
  write_polylines_json(dir / "c.json", p);
  const auto j = nlohmann::json::parse(io::read_text(dir / "c.json"));
  CHECK(j["format"] == "dirsurf-polylines");
  CHECK(j["version"] == 1);
  CHECK(j["resolution"] == 32);
  REQUIRE(j["polylines"].size() == 1);
  CHECK(j["polylines"][0].size() == p.chains()[0].size());

  const auto m = marching_cubes(analytic_oracle(scenes::builtin_scene("sphere3d").sdf), cube_bounds(3), 16);
  write_obj(dir / "s.obj", m);
  const std::string obj = io::read_text(dir / "s.obj");
  CHECK(std::count(obj.begin(), obj.end(), 'v') >= static_cast<long>(m.vertices.size()));
  std::size_t faces = 0;
  for (std::size_t pos = 0; (pos = obj.find("\nf ", pos)) != std::string::npos; ++pos) ++faces;
  CHECK(faces == m.faces.size());
}
