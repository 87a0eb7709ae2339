// Acceptance runner: one PASS/FAIL line per criterion. Tolerances are pinned
// here; the training criteria write their runs under --out for inspection.

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "app/commands.hpp"
#include "app/manifest.hpp"
#include "app/run_config.hpp"
#include "dirsurf/dirparam.hpp"
#include "dirsurf/errors.hpp"
#include "dirsurf/eval.hpp"
#include "dirsurf/io.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/render.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/train.hpp"
#include "support.hpp"

using namespace dirsurf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr double kReflectionTol = 1e-9;
constexpr double kIdentityBudgetSec = 5.0;
// Criterion 2
constexpr int kRandomNets = 50;
constexpr double kParamRelTol = 1e-3;
constexpr double kSpatialRelTol = 1e-4;
constexpr double kAutodiffBudgetSec = 30.0;
// Below this absolute difference an entry counts as exact (FD round-off is ~1e-10).
constexpr double kGradAbsFloor = 1e-8;
// Criterion 3
constexpr int kWeightRays = 10000;
constexpr double kWeightSumSlack = 1e-9;
constexpr int kCrossingRays = 100;
constexpr double kOpacityTol = 1e-6;
// Criterion 4
constexpr double kInitHausdorff = 0.1;
// Criterion 5
constexpr double kChamferExampleTol = 1e-3;
constexpr double kNormalMaeTol = 1e-6;
// Criterion 6
constexpr double kDispersionRatio = 2.0;
constexpr double kDiagnosticBudgetSec = 5.0;
// Criterion 7
constexpr int kTrainIterations = 5000;
constexpr double kDiskHybridOverReflection = 1.1;
constexpr double kDiskViewingOverHybrid = 1.5;
constexpr double kLshapeHybridOverBest = 1.25;
constexpr double kBlobHybridOverViewing = 1.15;
constexpr double kReproductionBudgetSec = 15 * 60;
constexpr int kFinalEvalResolution = 256;
constexpr int kFinalEvalPoints = 10000;
constexpr std::uint64_t kDatasetSeed = 7;
constexpr std::uint64_t kFitSeed = 1;
const Vec3 kNotchProbe(0.22, 0.22, 0.0);

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

// ---------------------------------------------------------------------------
// 1. Directional parameterization identities

std::vector<double> values_of(const std::vector<ad::Var>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.push_back(x.value());
  return out;
}

Outcome direction_identities() {
  using namespace dirparam;
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;
  for (int dim : {2, 3}) {
    Rng rng(100 + dim);
    for (int i = 0; i < 2000; ++i) {
      const Vec3 d = testing::random_unit(rng, dim);
      const Vec3 n = testing::random_unit(rng, dim);
      const Vec3 r = reflect_direction(d, n);
      worst = std::max({worst, std::fabs(r.norm() - 1.0), std::fabs(r.dot(n) - d.dot(n)), (reflect_direction(r, n) - d).norm()});
    }
  }
  o.require(worst < kReflectionTol, "reflection identities worst " + fmt(worst));

  bool boundary = true, monotone_f = true, monotone_gamma = true;
  for (double gamma : {1e-3, 0.5, 20.0, 1e3}) {
    boundary = boundary && blend_weight(0.0, gamma) == 1.0;
    double prev = 1.0;
    for (int i = 1; i <= 100; ++i) {
      const double a = blend_weight(0.002 * i, gamma);
      if (!(a < prev) && !(a == 0.0 && prev == 0.0)) monotone_f = false;
      prev = a;
    }
  }
  for (double f : {0.01, 0.1, 0.5}) {
    double prev = 1.0;
    for (double gamma = 0.1; gamma < 50.0; gamma *= 1.3) {
      const double a = blend_weight(f, gamma);
      if (!(a < prev)) monotone_gamma = false;
      prev = a;
    }
  }
  o.require(boundary, "alpha(0) = 1");
  o.require(monotone_f, "alpha decreasing in |f|");
  o.require(monotone_gamma, "alpha decreasing in gamma");

  // alpha = 1 on the surface and alpha = 0 far away with a huge gamma.
  int mismatches = 0;
  Rng rng(11);
  for (int dim : {2, 3}) {
    for (int i = 0; i < 100; ++i) {
      const Vec3 d = testing::random_unit(rng, dim);
      const std::optional<VarVec> n = constant_vec(testing::random_unit(rng, dim));
      ad::Tape t;
      const ad::Var gb = t.parameter(0.3), huge = t.parameter(7.5);
      DirectionalConfig cfg;
      cfg.direction_pe = {3, true};
      cfg.mode = Mode::Viewing;
      const auto view = values_of(direction_features(cfg, dim, d, n, ad::Var(0.5), gb));
      cfg.mode = Mode::Reflection;
      const auto refl = values_of(direction_features(cfg, dim, d, n, ad::Var(0.0), gb));
      cfg.mode = Mode::Hybrid;
      for (auto fusion : {FusionOrder::PreEncoding, FusionOrder::PostEncoding}) {
        cfg.fusion = fusion;
        if (values_of(direction_features(cfg, dim, d, n, ad::Var(0.0), gb)) != refl) ++mismatches;
        if (values_of(direction_features(cfg, dim, d, n, ad::Var(0.5), huge)) != view) ++mismatches;
      }
    }
  }
  o.require(mismatches == 0, "hybrid limits reproduce viewing/reflection features exactly (" +
                                 std::to_string(mismatches) + " mismatches)");
  const double sec = seconds_since(t0);
  o.require(sec < kIdentityBudgetSec, fmt(sec) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Autodiff against finite differences on random networks

nets::NetworkConfig random_small_net(Rng& rng) {
  std::uniform_int_distribution<int> width(4, 12), depth(2, 3), feat(2, 4), dim(2, 3), pe(0, 2);
  nets::NetworkConfig n;
  n.dim = dim(rng);
  n.position_pe = {pe(rng), true};
  n.radiance_position_pe = {1, true};
  n.sdf_width = width(rng);
  n.sdf_depth = depth(rng);
  // A skip layer needs room for the re-injected input.
  const bool skip = n.sdf_depth == 3 && n.sdf_width > n.position_pe.output_dim(n.dim);
  n.sdf_skips = skip ? std::vector<int>{2} : std::vector<int>{};
  n.feature_dim = feat(rng);
  n.radiance_width = 6;
  n.radiance_depth = 2;
  n.softplus_beta = std::uniform_real_distribution<double>(5.0, 20.0)(rng);
  return n;
}

Eigen::MatrixXd random_points(Rng& rng, int dim, int n) {
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  Eigen::MatrixXd p(dim, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
  return p;
}

// Sum over points of f + 0.7 |grad f|^2: exercises the mixed second-order path.
constexpr double kEikonalWeight = 0.7;

double eikonal_objective(const nets::Mlp& mlp, const Eigen::MatrixXd& pts, const nets::PeConfig& pe) {
  std::vector<Eigen::MatrixXd> jac;
  const Eigen::MatrixXd x = nets::pe_encode_batch(pts, pe, &jac);
  nets::MlpBatch b;
  b.forward(mlp, x, jac);
  double v = b.output().row(0).sum();
  for (int j = 0; j < b.tangent_count(); ++j) v += kEikonalWeight * b.output_tangent(j).row(0).squaredNorm();
  return v;
}

nets::Mlp eikonal_objective_grad(const nets::Mlp& mlp, const Eigen::MatrixXd& pts, const nets::PeConfig& pe) {
  std::vector<Eigen::MatrixXd> jac;
  const Eigen::MatrixXd x = nets::pe_encode_batch(pts, pe, &jac);
  nets::MlpBatch b;
  b.forward(mlp, x, jac);
  Eigen::MatrixXd out_adj = Eigen::MatrixXd::Zero(b.output().rows(), x.cols());
  out_adj.row(0).setOnes();
  std::vector<Eigen::MatrixXd> t_adj;
  for (int j = 0; j < b.tangent_count(); ++j) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(b.output().rows(), x.cols());
    a.row(0) = 2.0 * kEikonalWeight * b.output_tangent(j).row(0);
    t_adj.push_back(a);
  }
  nets::Mlp grads = nets::Mlp::zeros(mlp.cfg);
  b.backward(mlp, out_adj, t_adj, grads);
  return grads;
}

Outcome autodiff_oracle() {
  const auto t0 = Clock::now();
  Outcome o;
  Rng rng(2024);
  double worst_batch = 0.0, worst_tape = 0.0, worst_spatial = 0.0;
  long checked = 0;
  int detach_leaks = 0, detach_dead = 0;
  for (int k = 0; k < kRandomNets; ++k) {
    const auto net = random_small_net(rng);
    const int dim = net.dim;
    auto bundle = nets::make_field_bundle(net, nets::PeConfig{2, true}, true, 0.3, static_cast<std::uint64_t>(k));
    const Eigen::MatrixXd pts = random_points(rng, dim, 3);

    // Batch kernel: every SDF parameter.
    const nets::Mlp g = eikonal_objective_grad(bundle.sdf, pts, net.position_pe);
    auto objective = [&] { return eikonal_objective(bundle.sdf, pts, net.position_pe); };
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) {
        const double fd = testing::central_diff(objective, bundle.sdf.weights[l](i));
        worst_batch = std::max(worst_batch, testing::rel_error(g.weights[l](i), fd, kGradAbsFloor));
        ++checked;
      }
      for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) {
        const double fd = testing::central_diff(objective, bundle.sdf.biases[l](i));
        worst_batch = std::max(worst_batch, testing::rel_error(g.biases[l](i), fd, kGradAbsFloor));
        ++checked;
      }
    }

    // Scalar tape route at one point: weights sampled with a stride.
    Vec3 x = Vec3::Zero();
    x.head(dim) = pts.col(0);
    {
      ad::Tape tape;
      const auto tf = nets::bind_to_tape(tape, bundle, true);
      const auto sg = nets::sdf_gradient(tf, x);
      ad::Var q = sg.f;
      for (const auto& c : sg.gradient) q = q + ad::Var(kEikonalWeight) * c * c;
      const auto grads = tape.backward(q);
      auto tape_objective = [&] {
        ad::Tape t2;
        const auto f2 = nets::bind_to_tape(t2, bundle, false);
        const auto s2 = nets::sdf_gradient(f2, x);
        double v = s2.f.value();
        for (const auto& c : s2.gradient) v += kEikonalWeight * c.value() * c.value();
        return v;
      };
      for (std::size_t l = 0; l < tf.sdf.weights.size(); ++l) {
        const auto cols = bundle.sdf.weights[l].cols();
        for (std::size_t i = 0; i < tf.sdf.weights[l].size(); i += 5) {
          const auto r = static_cast<Eigen::Index>(i) / cols, c = static_cast<Eigen::Index>(i) % cols;
          const double fd = testing::central_diff(tape_objective, bundle.sdf.weights[l](r, c));
          const auto id = tf.sdf.weights[l][i].id();
          worst_tape = std::max(worst_tape, testing::rel_error(grads.count(id) ? grads.at(id) : 0.0, fd, kGradAbsFloor));
          ++checked;
        }
      }

      // Forward spatial tangents.
      for (int j = 0; j < dim; ++j) {
        auto f = [&] {
          ad::Tape t3;
          return nets::sdf_eval(nets::bind_to_tape(t3, bundle, false), x).f.value();
        };
        const double fd = testing::central_diff(f, x[j]);
        worst_spatial = std::max(worst_spatial, testing::rel_error(sg.gradient[static_cast<std::size_t>(j)].value(), fd, 1e-9));
      }
    }

    // Detach path: alpha must reach gamma_b but never the SDF parameters.
    for (bool detach : {true, false}) {
      ad::Tape tape;
      const auto tf = nets::bind_to_tape(tape, bundle, true);
      const ad::Var f = nets::sdf_eval(tf, x).f;
      const ad::Var alpha = dirparam::blend_weight(f, tf.gamma_b, detach);
      const auto grads = tape.backward(alpha);
      double sdf_grad = 0.0;
      for (const auto& layer : tf.sdf.weights)
        for (const auto& w : layer)
          if (grads.count(w.id())) sdf_grad = std::max(sdf_grad, std::fabs(grads.at(w.id())));
      const bool gb_live = grads.count(tf.gamma_b.id()) && grads.at(tf.gamma_b.id()) != 0.0;
      if (detach && (sdf_grad != 0.0 || !gb_live)) ++detach_leaks;
      if (!detach && sdf_grad == 0.0) ++detach_dead;
    }
  }
  o.require(worst_batch < kParamRelTol, "batch parameter rel err " + fmt(worst_batch));
  o.require(worst_tape < kParamRelTol, "tape parameter rel err " + fmt(worst_tape));
  o.require(worst_spatial < kSpatialRelTol, "spatial rel err " + fmt(worst_spatial));
  o.require(detach_leaks == 0 && detach_dead == 0,
            "detach path zero (" + std::to_string(detach_leaks) + " leaks, " + std::to_string(detach_dead) + " dead)");
  const double sec = seconds_since(t0);
  o.require(sec < kAutodiffBudgetSec, std::to_string(kRandomNets) + " nets, " + std::to_string(checked) +
                                         " parameters, " + fmt(sec) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 3. Rendering invariants

scenes::Ray make_ray(const Vec3& o, const Vec3& d, double near, double far) {
  scenes::Ray r;
  r.origin = o;
  r.direction = d.normalized();
  r.near = near;
  r.far = far;
  return r;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Outcome rendering_invariants() {
  using scenes::AnalyticSdf;
  using scenes::CsgNode;
  Outcome o;
  const std::vector<AnalyticSdf> sdfs{
      AnalyticSdf(2, CsgNode::sphere(Vec3::Zero(), 0.5)),
      scenes::builtin_scene("flat2d-lshape").sdf,
      scenes::builtin_scene("flat2d-blob").sdf,
      scenes::builtin_scene("sphere3d").sdf,
      scenes::builtin_scene("bowl3d").sdf,
  };
  const std::vector<double> sharpness{5.0, 50.0, 500.0, 5000.0};
  Rng rng(21);
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  dirparam::DirectionalConfig dcfg;
  double worst = 0.0;
  int rays_done = 0;
  const int per_combo = kWeightRays / static_cast<int>(sdfs.size() * sharpness.size());
  for (const auto& sdf : sdfs) {
    for (double s : sharpness) {
      render::AnalyticField field(sdf, Rgb::Constant(0.5), s);
      std::vector<scenes::Ray> rays;
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < per_combo; ++i) {
        const Vec3 d = testing::random_unit(rng, sdf.dim());
        Vec3 side = testing::random_unit(rng, sdf.dim());
        side -= side.dot(d) * d;
        rays.push_back(make_ray(-2.0 * d + 0.8 * off(rng) * side, d, 0.5, 3.5));
        seeds.push_back(static_cast<std::uint64_t>(rays_done + i));
      }
      const auto res = render::render_batch(field, dcfg, rays, render::SamplingConfig{16, 16, true}, seeds, Rgb::Zero());
      for (const auto& r : res.rays) worst = std::max(worst, r.accumulated.value());
      rays_done += per_combo;
    }
  }
  o.require(worst <= 1.0 + kWeightSumSlack && rays_done >= kWeightRays,
            "max weight sum " + fmt(worst) + " over " + std::to_string(rays_done) + " rays");

  // Planar SDF: the weight peak sits at the crossing.
  int off_peak = 0;
  Rng prng(33);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < kCrossingRays; ++i) {
    const Vec3 n = testing::random_unit(prng, 2);
    const Vec3 tangent(-n.y(), n.x(), 0);
    const double offset = 0.3 * u(prng);
    const AnalyticSdf plane(2, CsgNode::half_space(n, offset));
    const Vec3 start = n * (offset + 1.2) + 0.5 * u(prng) * tangent;
    const double tilt = u(prng) * std::numbers::pi / 3;
    const Vec3 d = -(std::cos(tilt) * n + std::sin(tilt) * tangent);
    const scenes::Ray ray = make_ray(start, d, 0.0, 3.0);
    const double t_star = plane.value(start) / -d.dot(n);
    const auto t = render::stratified_samples(ray, 64, static_cast<std::uint64_t>(i));
    std::vector<double> a;
    for (std::size_t k = 0; k + 1 < t.size(); ++k)
      a.push_back(render::sdensity_opacity(plane.value(ray.origin + t[k] * ray.direction),
                                           plane.value(ray.origin + t[k + 1] * ray.direction), 200.0));
    const std::vector<std::array<double, 3>> c(a.size(), {0.0, 0.0, 0.0});
    const auto w = render::composite<double>(a, c, Rgb::Zero()).weights;
    const auto k = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    if (std::fabs(0.5 * (t[k] + t[k + 1]) - t_star) > (ray.far - ray.near) / 64) ++off_peak;
  }
  o.require(off_peak == 0, std::to_string(off_peak) + "/" + std::to_string(kCrossingRays) + " weight peaks off the crossing");

  const double independent = (sigmoid(1.0) - sigmoid(-1.0)) / sigmoid(1.0);
  const double opacity = render::sdensity_opacity(0.1, -0.1, 10.0);
  o.require(std::fabs(opacity - independent) < kOpacityTol, "opacity example " + fmt(opacity));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Geometric initialization

Outcome geometric_init() {
  Outcome o;
  for (int dim : {2, 3}) {
    nets::NetworkConfig n;
    n.dim = dim;
    const auto bundle = nets::make_field_bundle(n, nets::PeConfig{2, true}, false, 0.3, 0);
    const eval::Bounds b = eval::cube_bounds(dim);
    const scenes::AnalyticSdf sphere(dim, scenes::CsgNode::sphere(Vec3::Zero(), n.init_radius));
    const auto truth = eval::sample_analytic_surface(sphere, b, 4000, 5);
    std::vector<Vec3> extracted;
    if (dim == 2) extracted = eval::sample_polylines(eval::marching_squares(eval::network_oracle(bundle), b, 256), 4000, 5);
    else extracted = eval::sample_mesh(eval::marching_cubes(eval::network_oracle(bundle), b, 64), 4000, 5);
    const double h = extracted.empty() ? INFINITY : eval::hausdorff_distance(extracted, truth);
    o.require(h < kInitHausdorff, std::to_string(dim) + "D Hausdorff " + fmt(h));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 5. Extraction and metric oracles

Outcome extraction_metrics() {
  Outcome o;
  for (const char* id : {"flat2d-disk", "flat2d-lshape", "flat2d-blob", "sphere3d", "bowl3d"}) {
    const auto s = scenes::builtin_scene(id);
    const eval::Bounds b = eval::cube_bounds(s.dim);
    const int res = s.dim == 2 ? 256 : 64;
    std::vector<Vec3> verts = s.dim == 2 ? eval::marching_squares(eval::analytic_oracle(s.sdf), b, res).vertices
                                         : eval::marching_cubes(eval::analytic_oracle(s.sdf), b, res).vertices;
    double worst = verts.empty() ? INFINITY : 0.0;
    for (const auto& v : verts) worst = std::max(worst, std::fabs(s.sdf.value(v)));
    const double bound = b.diagonal() / res;
    o.require(worst < bound, std::string(id) + " residual/cell " + fmt(worst / bound));
  }

  auto circle = [](double r) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10000; ++i) {
      const double a = 2.0 * std::numbers::pi * (i + 0.5) / 10000;
      pts.push_back(r * Vec3(std::cos(a), std::sin(a), 0));
    }
    return pts;
  };
  const double cd = eval::chamfer_distance(circle(0.5), circle(0.6));
  o.require(std::fabs(cd - 0.1) < kChamferExampleTol, "concentric chamfer " + fmt(cd));

  Rng rng(10);
  const double a = 10.0 * std::numbers::pi / 180.0;
  io::Image base(256, 1, 3), rotated(256, 1, 3), mask(256, 1, 1);
  for (int x = 0; x < 256; ++x) {
    const Vec3 n = testing::random_unit(rng, 3);
    // Rotate about an axis orthogonal to n so every pixel turns by exactly 10 degrees.
    const Vec3 axis = n.unitOrthogonal();
    const Vec3 r = std::cos(a) * n + std::sin(a) * axis.cross(n);
    for (int c = 0; c < 3; ++c) {
      base.at(x, 0, c) = n[c];
      rotated.at(x, 0, c) = r[c];
    }
    mask.at(x, 0, 0) = 1.0;
  }
  const double mae = eval::normal_mae(rotated, base, mask);
  o.require(std::fabs(mae - 10.0) < kNormalMaeTol, "rotated normal MAE " + fmt(mae) + " deg");
  return o;
}

// ---------------------------------------------------------------------------
// 6. Reflection-direction dispersion near a concavity

Outcome dispersion_diagnostic() {
  const auto t0 = Clock::now();
  Outcome o;
  const auto lshape = scenes::builtin_scene("flat2d-lshape");
  const auto fan_rays = eval::ray_fan(2, Vec3(1.5, 1.5, 0), Vec3(-0.1, -0.1, 0), 12.0, 32, 2.0);
  const auto fan = eval::fan_dispersion(lshape.sdf, fan_rays, 256);
  const auto again = eval::fan_dispersion(lshape.sdf, fan_rays, 256);
  const double near = fan.mean_spread[0], far = fan.mean_spread[2];
  const bool populated = fan.rays_in_band[0] > 0 && fan.rays_in_band[2] > 0;
  o.require(populated && far >= kDispersionRatio * near && far > 0.0,
            "L-shape near " + fmt(near) + " rad, far " + fmt(far) + " rad");
  o.require(again.mean_spread == fan.mean_spread, "deterministic");

  const auto half = scenes::builtin_scene("flat2d-halfplane");
  const auto plane_fan = eval::fan_dispersion(half.sdf, eval::ray_fan(2, Vec3(0.3, 1.5, 0), Vec3::Zero(), 30.0, 32, 2.0), 256);
  double plane_max = 0.0;
  for (const auto& r : plane_fan.rays)
    for (const auto& b : r.bands) plane_max = std::max(plane_max, b.spread_rad);
  o.require(plane_max == 0.0, "half-plane max spread " + fmt(plane_max));
  const double sec = seconds_since(t0);
  o.require(sec < kDiagnosticBudgetSec, fmt(sec) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 7 and 8. Training runs

/// Small enough for 5000 steps in a minute or two on one core.
json desk_config() {
  return json::parse(R"({
    "network": {"sdf_width": 32, "sdf_depth": 3, "radiance_width": 32, "radiance_depth": 2, "feature_dim": 8},
    "sampling": {"coarse": 16, "fine": 16},
    "train": {"rays_per_batch": 32, "eikonal_points": 32, "log_every": 500, "eval_every": 1000,
              "eval_resolution": 128, "eval_points": 4000,
              "lr": {"base": 1e-3, "warmup": 200, "floor": 1e-5}}
  })");
}

struct RunResult {
  double chamfer = INFINITY;
  bool probe_inside = false;
  double seconds = 0.0;
};

class Runner {
 public:
  explicit Runner(fs::path root) : root_(std::move(root)) {}

  /// Trains once per distinct (scene, direction) and caches the result.
  const RunResult& run(const std::string& scene, const json& direction) {
    const std::string key = scene + " " + direction.dump();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    json doc = desk_config();
    doc["scene"] = scene;
    doc["direction"] = direction;
    doc["train"]["iterations"] = kTrainIterations;
    doc["seed"] = kFitSeed;
    const app::RunConfig cfg = app::run_config_from_json(doc);

    std::string name = scene;
    for (const auto& [k, v] : direction.items()) name += "_" + k + "-" + (v.is_string() ? v.get<std::string>() : v.dump());
    const fs::path dir = root_ / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    io::write_text(dir / app::kResolvedConfigName, app::to_json(cfg).dump(2));

    const auto t0 = Clock::now();
    const auto ds = scenes::generate_dataset(cfg.scene, scenes::default_rig(2, cfg.rig, cfg.scene.bound_radius), kDatasetSeed);
    train::FitOptions opts;
    opts.out_dir = dir;
    const auto fit = train::fit(ds, cfg.network, cfg.direction, cfg.train, cfg.sampling, cfg.losses, kFitSeed, opts);
    const auto oracle = eval::network_oracle(fit.bundle);
    RunResult r;
    r.chamfer = train::evaluate_surface(oracle, ds.scene, kFinalEvalResolution, kFinalEvalPoints, kFitSeed).chamfer;
    const auto contour = eval::marching_squares(oracle, eval::cube_bounds(2), kFinalEvalResolution);
    r.probe_inside = eval::contains(contour, kNotchProbe);
    r.seconds = seconds_since(t0);
    eval::write_polylines_json(dir / "surface.json", contour);
    io::write_text(dir / "result.json",
                   json{{"chamfer", r.chamfer}, {"probe_inside", r.probe_inside}, {"seconds", r.seconds}}.dump(2));
    std::cerr << "  " << name << ": chamfer " << fmt(r.chamfer) << ", notch probe "
              << (r.probe_inside ? "inside" : "outside") << ", " << fmt(r.seconds) << " s\n";
    return cache_.emplace(key, r).first->second;
  }

  double total_seconds() const {
    double s = 0.0;
    for (const auto& [k, r] : cache_) s += r.seconds;
    return s;
  }

 private:
  fs::path root_;
  std::map<std::string, RunResult> cache_;
};

json mode(const char* m) { return json{{"mode", m}}; }

Outcome qualitative_ordering(Runner& runner) {
  Outcome o;
  const auto t0 = Clock::now();
  const double dv = runner.run("flat2d-disk", mode("viewing")).chamfer;
  const double dr = runner.run("flat2d-disk", mode("reflection")).chamfer;
  const double dh = runner.run("flat2d-disk", mode("hybrid")).chamfer;
  o.require(dh <= kDiskHybridOverReflection * dr && dv >= kDiskViewingOverHybrid * dh,
            "(a) disk viewing " + fmt(dv) + ", reflection " + fmt(dr) + ", hybrid " + fmt(dh) +
                " [hybrid/reflection " + fmt(dh / dr) + ", viewing/hybrid " + fmt(dv / dh) + "]");

  const auto& lv = runner.run("flat2d-lshape", mode("viewing"));
  const auto& lr = runner.run("flat2d-lshape", mode("reflection"));
  const auto& lh = runner.run("flat2d-lshape", mode("hybrid"));
  const double best = std::min(lv.chamfer, lr.chamfer);
  o.require(!lh.probe_inside && lr.probe_inside && lh.chamfer <= kLshapeHybridOverBest * best,
            "(b) notch probe hybrid " + std::string(lh.probe_inside ? "filled" : "open") + ", reflection " +
                (lr.probe_inside ? "filled" : "open") + "; L-shape viewing " + fmt(lv.chamfer) + ", reflection " +
                fmt(lr.chamfer) + ", hybrid " + fmt(lh.chamfer));

  const double bv = runner.run("flat2d-blob", mode("viewing")).chamfer;
  const double bh = runner.run("flat2d-blob", mode("hybrid")).chamfer;
  runner.run("flat2d-blob", mode("reflection"));
  o.require(bh <= kBlobHybridOverViewing * bv, "(c) blob viewing " + fmt(bv) + ", hybrid " + fmt(bh));
  const double sec = seconds_since(t0);
  o.require(sec < kReproductionBudgetSec, "9 runs in " + fmt(sec) + " s");
  return o;
}

Outcome ablation_ordering(Runner& runner) {
  Outcome o;
  const double base = runner.run("flat2d-lshape", mode("hybrid")).chamfer;
  const double low = runner.run("flat2d-lshape", json{{"mode", "hybrid"}, {"gamma_b_init", 0.0}}).chamfer;
  const double nodetach = runner.run("flat2d-lshape", json{{"mode", "hybrid"}, {"detach", false}}).chamfer;
  const double post = runner.run("flat2d-lshape", json{{"mode", "hybrid"}, {"fusion", "post_encoding"}}).chamfer;
  o.require(low > base, "gamma_b init 0.0 " + fmt(low) + " vs 0.3 " + fmt(base));
  o.require(nodetach >= base, "no-detach " + fmt(nodetach) + " vs detach " + fmt(base));
  o.require(post >= base, "post-encoding " + fmt(post) + " vs pre-encoding " + fmt(base));
  return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism of CLI outputs

struct EnvRoot {
  explicit EnvRoot(const fs::path& p) { ::setenv(app::kOutputRootEnv, p.c_str(), 1); }
  ~EnvRoot() { ::unsetenv(app::kOutputRootEnv); }
};

std::map<std::string, std::string> checksums(const fs::path& dir) {
  std::map<std::string, std::string> out;
  const json manifest = json::parse(io::read_text(dir / app::kManifestName));
  for (const auto& f : manifest.at("files")) out[f.at("path").get<std::string>()] = f.at("sha256").get<std::string>();
  return out;
}

int run_quiet(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = app::run_cli(args, out, err);
  if (code != app::kExitOk) std::cerr << "  dirsurf";
  if (code != app::kExitOk)
    for (const auto& a : args) std::cerr << " " << a;
  if (code != app::kExitOk) std::cerr << " exited " << code << ": " << err.str();
  return code;
}

Outcome determinism(const fs::path& root) {
  Outcome o;
  fs::remove_all(root);
  fs::create_directories(root);
  json doc = desk_config();
  doc["scene"] = "flat2d-lshape";
  doc["train"]["iterations"] = 300;
  doc["train"]["log_every"] = 50;
  doc["train"]["eval_every"] = 100;
  doc["train"]["checkpoint_every"] = 100;
  doc["seed"] = 5;
  const fs::path cfg = root / "train.json";
  io::write_text(cfg, doc.dump(2));

  std::vector<std::map<std::string, std::string>> gen, trn;
  std::vector<std::string> logs;
  bool ran = true;
  for (const char* rerun : {"first", "second"}) {
    EnvRoot env(root / rerun);
    ran = ran && run_quiet({"generate", "--scene", "flat2d-blob", "--workers", "1", "-o", "gen"}) == app::kExitOk;
    ran = ran && run_quiet({"train", "-c", cfg.string(), "--mode", "hybrid", "--workers", "1", "-q", "-o", "trn"}) ==
                     app::kExitOk;
    if (!ran) break;
    gen.push_back(checksums(root / rerun / "gen"));
    trn.push_back(checksums(root / rerun / "trn"));
    logs.push_back(io::read_text(root / rerun / "trn" / "metrics.csv"));
  }
  o.require(ran, "commands succeeded");
  if (!ran) return o;
  o.require(gen[0] == gen[1] && !gen[0].empty(), "generate: " + std::to_string(gen[0].size()) + " files identical");
  o.require(trn[0] == trn[1] && !trn[0].empty(), "train: " + std::to_string(trn[0].size()) + " files identical");
  o.require(logs[0] == logs[1], "metrics log identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"dirsurf acceptance runner"};
  fs::path out = fs::temp_directory_path() / "dirsurf_acceptance";
  std::vector<int> only;
  cli.add_option("--out", out, "directory for training runs");
  cli.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(cli, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  Runner runner(out / "runs");
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"direction identities", direction_identities},
      {"autodiff vs finite differences", autodiff_oracle},
      {"rendering invariants", rendering_invariants},
      {"geometric initialization", geometric_init},
      {"extraction and metric oracles", extraction_metrics},
      {"reflection dispersion diagnostic", dispersion_diagnostic},
      {"2D qualitative ordering", [&] { return qualitative_ordering(runner); }},
      {"ablation ordering", [&] { return ablation_ordering(runner); }},
      {"determinism", [&] { return determinism(out / "determinism"); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
