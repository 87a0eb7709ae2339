#pragma once

// NeuS-style volume rendering of an SDF field.
//
// A Field supplies SDF values, gradients, geometry features and radiance for
// batches of points. The neural field evaluates its MLPs as batched blocks on
// the tape; everything per sample (direction features, opacities, compositing)
// is ordinary scalar tape arithmetic, so one backward sweep covers the batch.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/dirparam.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::render {

using scenes::Ray;
using RgbVar = std::array<ad::Var, 3>;

struct SamplingConfig {
  int coarse = 32;
  int fine = 32;
  bool jitter = true;  ///< false: deterministic mid-stratum / mid-CDF positions
};

/// One sample per equal sub-interval of [near, far], sorted ascending.
std::vector<double> stratified_samples(const Ray& ray, int n, std::uint64_t seed, bool jitter = true);

/// Draws m samples from the piecewise-constant density over the coarse intervals
/// (0.99 weight-proportional + 0.01 length-proportional) and merges them with
/// `t`. `weights` has one entry per interval [t_i, t_{i+1}]. All-zero weights
/// fall back to stratified samples.
std::vector<double> importance_resample(const Ray& ray, std::span<const double> t, std::span<const double> weights,
                                        int m, std::uint64_t seed, bool jitter = true);

/// Sorts and nudges exact duplicates apart by 1e-12 so the list is strictly increasing.
void merge_sorted(std::vector<double>& t);

/// Discrete S-density opacity max((sig(s f0) - sig(s f1)) / sig(s f0), 0), evaluated in log space.
double sdensity_opacity(double f0, double f1, double s);
ad::Var sdensity_opacity(const ad::Var& f0, const ad::Var& f1, const ad::Var& s);

template <typename T>
struct Composite {
  std::array<T, 3> color{};
  T accumulated{};
  T depth{};
  std::array<T, 3> normal{};
  std::vector<T> weights;
};

inline constexpr double kDepthEpsilon = 1e-10;

inline double value_of(double v) { return v; }
inline double value_of(const ad::Var& v) { return v.value(); }

/// w_i = a_i prod_{j<i}(1 - a_j); color = sum w_i c_i + (1 - sum w) background.
/// `t` and `normals` are optional (empty spans skip depth / normal).
template <typename T>
Composite<T> composite(std::span<const T> a, std::span<const std::array<T, 3>> c, const Rgb& background,
                       std::span<const double> t = {}, std::span<const std::array<T, 3>> normals = {}) {
  Composite<T> out;
  out.weights.reserve(a.size());
  T trans(1.0);
  T acc(0.0);
  T depth(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T w = trans * a[i];
    out.weights.push_back(w);
    acc = acc + w;
    for (int k = 0; k < 3; ++k) out.color[k] = out.color[k] + w * c[i][k];
    if (!t.empty()) depth = depth + w * T(t[i]);
    if (!normals.empty())
      for (int k = 0; k < 3; ++k) out.normal[k] = out.normal[k] + w * normals[i][k];
    trans = trans * (T(1.0) - a[i]);
  }
  const T rest = T(1.0) - acc;
  for (int k = 0; k < 3; ++k) out.color[k] = out.color[k] + rest * T(background[k]);
  out.accumulated = acc;
  if (!t.empty()) out.depth = depth / T(std::max(value_of(acc), kDepthEpsilon));
  return out;
}

/// Per-sample geometry, sample-major. `gradient` has z = 0 in flatland.
struct Geometry {
  std::vector<ad::Var> f;
  std::vector<dirparam::VarVec> gradient;
  std::vector<ad::Var> features;  ///< feature_dim values per sample
  int feature_dim = 0;
};

struct RadianceInputs {
  std::vector<ad::Var> direction;  ///< direction_dim values per sample
  int direction_dim = 0;
  std::vector<ad::Var> normal;  ///< dim values per sample
  const Geometry* geometry = nullptr;
};

class Field {
 public:
  virtual ~Field() = default;
  virtual int dim() const = 0;
  virtual nets::PeConfig direction_pe() const = 0;
  /// Values only, no tape.
  virtual Eigen::VectorXd sdf(const Eigen::MatrixXd& points) const = 0;
  /// Attaches trainable scalars to `tape`; nullptr evaluates without tracking.
  virtual void bind(ad::Tape* tape) = 0;
  virtual ad::Var sharpness() const = 0;
  virtual ad::Var gamma_b() const = 0;
  virtual Geometry geometry(const Eigen::MatrixXd& points) = 0;
  virtual std::vector<RgbVar> radiance(const Eigen::MatrixXd& points, const RadianceInputs& in) = 0;
  /// Moves tape adjoints of the bound scalars into the gradient sink (after backward).
  virtual void collect(const ad::Tape& tape) { (void)tape; }
};

/// The trainable field. MLP parameter gradients are accumulated into `grads`
/// during the backward sweep; nullptr grads means evaluation only.
class NeuralField : public Field {
 public:
  NeuralField(const nets::FieldBundle& params, nets::FieldBundle* grads = nullptr) : params_(params), grads_(grads) {}

  int dim() const override { return params_.dim(); }
  nets::PeConfig direction_pe() const override { return params_.direction_pe; }
  Eigen::VectorXd sdf(const Eigen::MatrixXd& points) const override { return nets::sdf_values(params_, points); }
  void bind(ad::Tape* tape) override;
  ad::Var sharpness() const override { return s_; }
  ad::Var gamma_b() const override { return gamma_b_; }
  Geometry geometry(const Eigen::MatrixXd& points) override;
  std::vector<RgbVar> radiance(const Eigen::MatrixXd& points, const RadianceInputs& in) override;
  void collect(const ad::Tape& tape) override;

 private:
  const nets::FieldBundle& params_;
  nets::FieldBundle* grads_;
  ad::Tape* tape_ = nullptr;
  ad::Var log_s_;
  ad::Var s_;
  ad::Var gamma_b_;
};

/// Ground-truth SDF with a constant emitter; nothing is trainable.
class AnalyticField : public Field {
 public:
  AnalyticField(scenes::AnalyticSdf sdf, Rgb color, double s, double sdf_scale = 1.0,
                nets::PeConfig direction_pe = {2, true}, double gamma_b = 0.3)
      : sdf_(std::move(sdf)), color_(color), s_(s), scale_(sdf_scale), pe_(direction_pe), gamma_b_(gamma_b) {}

  int dim() const override { return sdf_.dim(); }
  nets::PeConfig direction_pe() const override { return pe_; }
  Eigen::VectorXd sdf(const Eigen::MatrixXd& points) const override;
  void bind(ad::Tape*) override {}
  ad::Var sharpness() const override { return s_; }
  ad::Var gamma_b() const override { return gamma_b_; }
  Geometry geometry(const Eigen::MatrixXd& points) override;
  std::vector<RgbVar> radiance(const Eigen::MatrixXd& points, const RadianceInputs& in) override;

 private:
  scenes::AnalyticSdf sdf_;
  Rgb color_;
  double s_;
  double scale_;
  nets::PeConfig pe_;
  double gamma_b_;
};

struct RayOutput {
  RgbVar color{};
  ad::Var accumulated;
  ad::Var depth;
  RgbVar normal{};  ///< weight-averaged (unnormalized) normal
  int first_sample = 0;
  int sample_count = 0;
};

struct BatchResult {
  std::vector<RayOutput> rays;
  Geometry geometry;  ///< all samples of all rays, ray-major
  Eigen::MatrixXd points;
  dirparam::DirectionStats stats;
};

/// Renders every ray through coarse -> importance -> field -> direction
/// features -> radiance -> opacity -> composite. `seeds[i]` drives ray i.
BatchResult render_batch(Field& field, const dirparam::DirectionalConfig& dcfg, std::span<const Ray> rays,
                         const SamplingConfig& sampling, std::span<const std::uint64_t> seeds, const Rgb& background);

/// Plain-double result for one ray.
struct RenderOutput {
  Rgb color = Rgb::Zero();
  double accumulated = 0.0;
  double depth = 0.0;
  Vec3 normal = Vec3::Zero();
  bool background_blended = true;
};

RenderOutput to_values(const RayOutput& r);
RenderOutput render_ray(Field& field, const dirparam::DirectionalConfig& dcfg, const Ray& ray,
                        const SamplingConfig& sampling, std::uint64_t seed, const Rgb& background);

/// Untracked render of a camera view: color (3), accumulated weight (1), normal (3), depth (1).
struct ViewRender {
  io::Image color;
  io::Image accumulated;
  io::Image normal;
  io::Image depth;
};
ViewRender render_view(Field& field, const dirparam::DirectionalConfig& dcfg, const scenes::Camera& cam,
                       double bound_radius, const SamplingConfig& sampling, std::uint64_t seed, const Rgb& background,
                       int rays_per_chunk = 512);

/// Encodes a normal map (3 channels) as (n + 1) / 2 for PPM output.
io::Image encode_normals(const io::Image& normal, const io::Image& mask);

}  // namespace dirsurf::render
