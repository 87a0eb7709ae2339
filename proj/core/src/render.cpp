#include "dirsurf/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dirsurf/errors.hpp"

namespace dirsurf::render {

namespace {

void check_ray(const Ray& ray) {
  if (!(ray.near < ray.far)) throw UsageError("ray: near must be below far");
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::vector<double> stratified_samples(const Ray& ray, int n, std::uint64_t seed, bool jitter) {
  if (n < 2) throw UsageError("stratified_samples: need at least two samples");
  check_ray(ray);
  Rng rng(seed);
  const double len = ray.far - ray.near;
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? uniform01(rng) : 0.5;
    t[static_cast<std::size_t>(i)] = ray.near + (i + u) / n * len;
  }
  return t;
}

void merge_sorted(std::vector<double>& t) {
  std::sort(t.begin(), t.end());
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] <= t[i - 1]) t[i] = t[i - 1] + 1e-12;
}

std::vector<double> importance_resample(const Ray& ray, std::span<const double> t, std::span<const double> weights,
                                        int m, std::uint64_t seed, bool jitter) {
  if (t.size() < 2 || weights.size() + 1 != t.size())
    throw UsageError("importance_resample: need one weight per coarse interval");
  std::vector<double> out(t.begin(), t.end());
  if (m <= 0) return out;
  double wsum = 0.0;
  for (double w : weights) wsum += std::max(w, 0.0);
  if (!(wsum > 0.0)) {
    const auto extra = stratified_samples(ray, std::max(m, 2), seed, jitter);
    out.insert(out.end(), extra.begin(), extra.begin() + m);
    merge_sorted(out);
    return out;
  }
  const std::size_t bins = weights.size();
  const double span_len = t.back() - t.front();
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t i = 0; i < bins; ++i) {
    const double p = 0.99 * std::max(weights[i], 0.0) / wsum + 0.01 * (t[i + 1] - t[i]) / span_len;
    cdf[i + 1] = cdf[i] + p;
  }
  for (double& c : cdf) c /= cdf.back();

  Rng rng(seed);
  for (int j = 0; j < m; ++j) {
    const double u = jitter ? (j + uniform01(rng)) / m : (j + 0.5) / m;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t bin = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf.begin() - 1, 0, static_cast<std::ptrdiff_t>(bins - 1)));
    const double width = cdf[bin + 1] - cdf[bin];
    const double frac = width > 0.0 ? (u - cdf[bin]) / width : 0.5;
    out.push_back(t[bin] + std::clamp(frac, 0.0, 1.0) * (t[bin + 1] - t[bin]));
  }
  merge_sorted(out);
  return out;
}

double sdensity_opacity(double f0, double f1, double s) {
  if (!(s > 0.0)) throw DomainError("sdensity_opacity: sharpness must be positive");
  // log sig(s f1) - log sig(s f0)
  const double lr = softplus(-s * f0) - softplus(-s * f1);
  if (lr >= 0.0) return 0.0;
  return -std::expm1(lr);
}

ad::Var sdensity_opacity(const ad::Var& f0, const ad::Var& f1, const ad::Var& s) {
  if (!(s.value() > 0.0)) throw DomainError("sdensity_opacity: sharpness must be positive");
  const ad::Var lr = ad::softplus(-(s * f0)) - ad::softplus(-(s * f1));
  if (lr.value() >= 0.0) return ad::Var(0.0);
  return ad::Var(1.0) - ad::exp(lr);
}

// ---------------------------------------------------------------------------
// Neural field

namespace {

class SdfBlock final : public ad::ExternalFunction {
 public:
  SdfBlock(const nets::Mlp& mlp, nets::Mlp& grads, int dim) : mlp_(mlp), grads_(grads), dim_(dim) {}
  nets::MlpBatch batch;

  void backward(std::span<const double> out_adj, std::span<double> /*in_adj*/) override {
    const int feat = mlp_.cfg.output_dim - 1;
    const int stride = 1 + dim_ + feat;
    const auto n = static_cast<Eigen::Index>(out_adj.size() / static_cast<std::size_t>(stride));
    Eigen::MatrixXd a(1 + feat, n);
    std::vector<Eigen::MatrixXd> t(static_cast<std::size_t>(dim_), Eigen::MatrixXd::Zero(1 + feat, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* row = out_adj.data() + i * stride;
      a(0, i) = row[0];
      for (int j = 0; j < dim_; ++j) t[static_cast<std::size_t>(j)](0, i) = row[1 + j];
      for (int k = 0; k < feat; ++k) a(1 + k, i) = row[1 + dim_ + k];
    }
    batch.backward(mlp_, a, t, grads_);
  }

 private:
  const nets::Mlp& mlp_;
  nets::Mlp& grads_;
  int dim_;
};

class RadianceBlock final : public ad::ExternalFunction {
 public:
  RadianceBlock(const nets::Mlp& mlp, nets::Mlp& grads, int offset, int inputs)
      : mlp_(mlp), grads_(grads), offset_(offset), inputs_(inputs) {}
  nets::MlpBatch batch;

  void backward(std::span<const double> out_adj, std::span<double> in_adj) override {
    const auto n = static_cast<Eigen::Index>(out_adj.size() / 3);
    const Eigen::MatrixXd a = Eigen::Map<const Eigen::MatrixXd>(out_adj.data(), 3, n);
    const Eigen::MatrixXd x_adj = batch.backward(mlp_, a, {}, grads_);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int r = 0; r < inputs_; ++r) in_adj[static_cast<std::size_t>(i * inputs_ + r)] = x_adj(offset_ + r, i);
  }

 private:
  const nets::Mlp& mlp_;
  nets::Mlp& grads_;
  int offset_;
  int inputs_;
};

}  // namespace

void NeuralField::bind(ad::Tape* tape) {
  tape_ = grads_ ? tape : nullptr;
  const double ls = params_.log_s(0, 0);
  const double gb = params_.gamma_b(0, 0);
  if (tape_) {
    log_s_ = tape_->variable(ls);
    s_ = ad::exp(log_s_);
    gamma_b_ = params_.has_gamma_b ? tape_->variable(gb) : ad::Var(gb);
  } else {
    log_s_ = ad::Var(ls);
    s_ = ad::Var(std::exp(ls));
    gamma_b_ = ad::Var(gb);
  }
}

void NeuralField::collect(const ad::Tape& tape) {
  if (!grads_ || !tape_) return;
  grads_->log_s(0, 0) += tape.adjoint(log_s_);
  if (params_.has_gamma_b) grads_->gamma_b(0, 0) += tape.adjoint(gamma_b_);
}

Geometry NeuralField::geometry(const Eigen::MatrixXd& points) {
  const int dim = params_.dim();
  if (points.rows() != dim) throw UsageError("NeuralField::geometry: point dimension mismatch");
  const auto n = points.cols();
  const int feat = params_.sdf.cfg.output_dim - 1;
  std::vector<Eigen::MatrixXd> jac;
  const Eigen::MatrixXd enc = nets::pe_encode_batch(points, params_.net.position_pe, &jac);
  auto block = std::make_shared<SdfBlock>(params_.sdf, grads_ ? grads_->sdf : const_cast<nets::Mlp&>(params_.sdf), dim);
  block->batch.forward(params_.sdf, enc, jac);
  const auto& out = block->batch.output();

  const int stride = 1 + dim + feat;
  std::vector<double> values(static_cast<std::size_t>(n * stride));
  for (Eigen::Index i = 0; i < n; ++i) {
    double* row = values.data() + i * stride;
    row[0] = out(0, i);
    for (int j = 0; j < dim; ++j) row[1 + j] = block->batch.output_tangent(j)(0, i);
    for (int k = 0; k < feat; ++k) row[1 + dim + k] = out(1 + k, i);
  }
  std::vector<ad::Var> vars;
  if (tape_) {
    vars = tape_->record_external({}, values, block);
  } else {
    vars.assign(values.begin(), values.end());
  }

  Geometry g;
  g.feature_dim = feat;
  g.f.reserve(static_cast<std::size_t>(n));
  g.gradient.reserve(static_cast<std::size_t>(n));
  g.features.reserve(static_cast<std::size_t>(n * feat));
  for (Eigen::Index i = 0; i < n; ++i) {
    const ad::Var* row = vars.data() + i * stride;
    g.f.push_back(row[0]);
    dirparam::VarVec grad{ad::Var(0.0), ad::Var(0.0), ad::Var(0.0)};
    for (int j = 0; j < dim; ++j) grad[static_cast<std::size_t>(j)] = row[1 + j];
    g.gradient.push_back(grad);
    g.features.insert(g.features.end(), row + 1 + dim, row + stride);
  }
  return g;
}

std::vector<RgbVar> NeuralField::radiance(const Eigen::MatrixXd& points, const RadianceInputs& in) {
  const int dim = params_.dim();
  const auto n = points.cols();
  const Geometry& geo = *in.geometry;
  const Eigen::MatrixXd pe = nets::pe_encode_batch(points, params_.net.radiance_position_pe);
  const int offset = static_cast<int>(pe.rows());
  const int per = in.direction_dim + dim + geo.feature_dim;
  if (offset + per != params_.radiance.cfg.input_dim) throw UsageError("NeuralField::radiance: input width mismatch");

  Eigen::MatrixXd x(offset + per, n);
  x.topRows(offset) = pe;
  std::vector<ad::Var> inputs;
  if (tape_) inputs.reserve(static_cast<std::size_t>(n * per));
  for (Eigen::Index i = 0; i < n; ++i) {
    int r = offset;
    auto put = [&](const ad::Var& v) {
      x(r++, i) = v.value();
      if (tape_) inputs.push_back(v);
    };
    for (int k = 0; k < in.direction_dim; ++k) put(in.direction[static_cast<std::size_t>(i * in.direction_dim + k)]);
    for (int k = 0; k < dim; ++k) put(in.normal[static_cast<std::size_t>(i * dim + k)]);
    for (int k = 0; k < geo.feature_dim; ++k) put(geo.features[static_cast<std::size_t>(i * geo.feature_dim + k)]);
  }
  auto block = std::make_shared<RadianceBlock>(params_.radiance,
                                               grads_ ? grads_->radiance : const_cast<nets::Mlp&>(params_.radiance),
                                               offset, per);
  block->batch.forward(params_.radiance, x);
  const Eigen::MatrixXd& out = block->batch.output();
  std::vector<double> values(out.data(), out.data() + out.size());  // column-major: sample-major rgb
  std::vector<ad::Var> vars;
  if (tape_) {
    vars = tape_->record_external(inputs, values, block);
  } else {
    vars.assign(values.begin(), values.end());
  }
  std::vector<RgbVar> rgb(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) rgb[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = vars[static_cast<std::size_t>(3 * i + k)];
  return rgb;
}

// ---------------------------------------------------------------------------
// Analytic field

Eigen::VectorXd AnalyticField::sdf(const Eigen::MatrixXd& points) const {
  Eigen::VectorXd f(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    Vec3 p = Vec3::Zero();
    p.head(points.rows()) = points.col(i);
    f[i] = scale_ * sdf_.value(p);
  }
  return f;
}

Geometry AnalyticField::geometry(const Eigen::MatrixXd& points) {
  Geometry g;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    Vec3 p = Vec3::Zero();
    p.head(points.rows()) = points.col(i);
    const auto s = sdf_.eval(p);
    g.f.emplace_back(scale_ * s.f);
    g.gradient.push_back({ad::Var(scale_ * s.gradient.x()), ad::Var(scale_ * s.gradient.y()),
                          ad::Var(dim() == 3 ? scale_ * s.gradient.z() : 0.0)});
  }
  return g;
}

std::vector<RgbVar> AnalyticField::radiance(const Eigen::MatrixXd& points, const RadianceInputs&) {
  return std::vector<RgbVar>(static_cast<std::size_t>(points.cols()),
                             RgbVar{ad::Var(color_.x()), ad::Var(color_.y()), ad::Var(color_.z())});
}

// ---------------------------------------------------------------------------
// Batch rendering

BatchResult render_batch(Field& field, const dirparam::DirectionalConfig& dcfg, std::span<const Ray> rays,
                         const SamplingConfig& sampling, std::span<const std::uint64_t> seeds, const Rgb& background) {
  if (seeds.size() != rays.size()) throw UsageError("render_batch: one seed per ray required");
  const int dim = field.dim();
  const double s_now = field.sharpness().value();

  // Coarse pass (values only) to place the importance samples.
  const std::size_t nr = rays.size();
  std::vector<std::vector<double>> coarse(nr);
  Eigen::MatrixXd cpts(dim, static_cast<Eigen::Index>(nr) * sampling.coarse);
  for (std::size_t r = 0; r < nr; ++r) {
    coarse[r] = stratified_samples(rays[r], sampling.coarse, derive_seed(seeds[r], "coarse"), sampling.jitter);
    for (int i = 0; i < sampling.coarse; ++i) {
      const Vec3 p = rays[r].origin + coarse[r][static_cast<std::size_t>(i)] * rays[r].direction;
      cpts.col(static_cast<Eigen::Index>(r) * sampling.coarse + i) = p.head(dim);
    }
  }
  std::vector<std::vector<double>> ts(nr);
  if (sampling.fine > 0) {
    const Eigen::VectorXd cf = field.sdf(cpts);
    for (std::size_t r = 0; r < nr; ++r) {
      std::vector<double> a(static_cast<std::size_t>(sampling.coarse - 1));
      const Eigen::Index base = static_cast<Eigen::Index>(r) * sampling.coarse;
      for (int i = 0; i + 1 < sampling.coarse; ++i)
        a[static_cast<std::size_t>(i)] = sdensity_opacity(cf[base + i], cf[base + i + 1], s_now);
      std::vector<std::array<double, 3>> zero(a.size(), {0.0, 0.0, 0.0});
      const auto comp = composite<double>(a, zero, Rgb::Zero());
      ts[r] = importance_resample(rays[r], coarse[r], comp.weights, sampling.fine, derive_seed(seeds[r], "fine"),
                                  sampling.jitter);
    }
  } else {
    ts = coarse;
  }

  BatchResult res;
  std::size_t total = 0;
  for (const auto& t : ts) total += t.size();
  res.points.resize(dim, static_cast<Eigen::Index>(total));
  res.rays.resize(nr);
  {
    Eigen::Index col = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      res.rays[r].first_sample = static_cast<int>(col);
      res.rays[r].sample_count = static_cast<int>(ts[r].size());
      for (double t : ts[r]) res.points.col(col++) = (rays[r].origin + t * rays[r].direction).head(dim);
    }
  }

  res.geometry = field.geometry(res.points);
  const Geometry& geo = res.geometry;

  RadianceInputs rin;
  rin.geometry = &geo;
  rin.direction_dim = dcfg.direction_pe.output_dim(dim);
  if (field.direction_pe().output_dim(dim) != rin.direction_dim)
    throw UsageError("render_batch: direction encoding differs from the field's");
  rin.direction.reserve(total * static_cast<std::size_t>(rin.direction_dim));
  rin.normal.reserve(total * static_cast<std::size_t>(dim));
  std::vector<RgbVar> normals(total, RgbVar{ad::Var(0.0), ad::Var(0.0), ad::Var(0.0)});
  const ad::Var gamma_b = field.gamma_b();
  for (std::size_t r = 0; r < nr; ++r) {
    for (int i = 0; i < res.rays[r].sample_count; ++i) {
      const auto k = static_cast<std::size_t>(res.rays[r].first_sample + i);
      const auto n = dirparam::normal_from_gradient(geo.gradient[k]);
      const auto feats = dirparam::direction_features(dcfg, dim, rays[r].direction, n, geo.f[k], gamma_b, &res.stats);
      rin.direction.insert(rin.direction.end(), feats.begin(), feats.end());
      if (n) normals[k] = *n;
      for (int j = 0; j < dim; ++j) rin.normal.push_back(normals[k][static_cast<std::size_t>(j)]);
    }
  }
  const std::vector<RgbVar> color = field.radiance(res.points, rin);

  const ad::Var s = field.sharpness();
  for (std::size_t r = 0; r < nr; ++r) {
    auto& out = res.rays[r];
    try {
      const auto first = static_cast<std::size_t>(out.first_sample);
      const auto m = static_cast<std::size_t>(out.sample_count);
      std::vector<ad::Var> a(m - 1);
      for (std::size_t i = 0; i + 1 < m; ++i) a[i] = sdensity_opacity(geo.f[first + i], geo.f[first + i + 1], s);
      const auto comp = composite<ad::Var>(a, std::span<const RgbVar>(color.data() + first, m - 1), background,
                                           std::span<const double>(ts[r].data(), m - 1),
                                           std::span<const RgbVar>(normals.data() + first, m - 1));
      out.color = comp.color;
      out.accumulated = comp.accumulated;
      out.depth = comp.depth;
      out.normal = comp.normal;
    } catch (const NumericError& e) {
      throw NumericError("ray " + std::to_string(r) + ": " + e.what());
    }
  }
  return res;
}

RenderOutput to_values(const RayOutput& r) {
  RenderOutput o;
  for (int k = 0; k < 3; ++k) {
    o.color[k] = r.color[static_cast<std::size_t>(k)].value();
    o.normal[k] = r.normal[static_cast<std::size_t>(k)].value();
  }
  o.accumulated = r.accumulated.value();
  o.depth = r.depth.value();
  o.background_blended = true;
  return o;
}

RenderOutput render_ray(Field& field, const dirparam::DirectionalConfig& dcfg, const Ray& ray,
                        const SamplingConfig& sampling, std::uint64_t seed, const Rgb& background) {
  const std::uint64_t seeds[1] = {seed};
  const auto res = render_batch(field, dcfg, std::span<const Ray>(&ray, 1), sampling, seeds, background);
  return to_values(res.rays.front());
}

ViewRender render_view(Field& field, const dirparam::DirectionalConfig& dcfg, const scenes::Camera& cam,
                       double bound_radius, const SamplingConfig& sampling, std::uint64_t seed, const Rgb& background,
                       int rays_per_chunk) {
  ViewRender v;
  v.color = io::Image(cam.width, cam.height, 3);
  v.accumulated = io::Image(cam.width, cam.height, 1);
  v.normal = io::Image(cam.width, cam.height, 3);
  v.depth = io::Image(cam.width, cam.height, 1);
  field.bind(nullptr);
  std::vector<Ray> rays;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<int, int>> pix;
  auto flush = [&] {
    if (rays.empty()) return;
    const auto res = render_batch(field, dcfg, rays, sampling, seeds, background);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const auto o = to_values(res.rays[i]);
      const auto [x, y] = pix[i];
      for (int c = 0; c < 3; ++c) {
        v.color.at(x, y, c) = o.color[c];
        v.normal.at(x, y, c) = o.normal[c];
      }
      v.accumulated.at(x, y, 0) = o.accumulated;
      v.depth.at(x, y, 0) = o.depth;
    }
    rays.clear();
    seeds.clear();
    pix.clear();
  };
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto ray = cam.ray(x, y, bound_radius);
      if (!ray) {
        for (int c = 0; c < 3; ++c) v.color.at(x, y, c) = background[c];
        continue;
      }
      rays.push_back(*ray);
      seeds.push_back(derive_seed(seed, "pixel", static_cast<std::uint64_t>(y * cam.width + x)));
      pix.emplace_back(x, y);
      if (static_cast<int>(rays.size()) >= rays_per_chunk) flush();
    }
  }
  flush();
  return v;
}

io::Image encode_normals(const io::Image& normal, const io::Image& mask) {
  io::Image out(normal.width, normal.height, 3);
  for (int y = 0; y < normal.height; ++y) {
    for (int x = 0; x < normal.width; ++x) {
      Vec3 n(normal.at(x, y, 0), normal.at(x, y, 1), normal.at(x, y, 2));
      const bool on = mask.channels == 0 || mask.at(x, y, 0) > 0.5;
      if (!on || n.norm() == 0.0) continue;
      n.normalize();
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = 0.5 * (n[c] + 1.0);
    }
  }
  return out;
}

}  // namespace dirsurf::render
