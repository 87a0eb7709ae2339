#include "dirsurf/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dirsurf/errors.hpp"

namespace dirsurf::nets {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Fills value, first and second derivative of the activation elementwise.
void activate(Activation act, double beta, const Eigen::MatrixXd& z, Eigen::MatrixXd* a, Eigen::MatrixXd* d1,
              Eigen::MatrixXd* d2) {
  switch (act) {
    case Activation::Identity:
      if (a) *a = z;
      if (d1) d1->setOnes(z.rows(), z.cols());
      if (d2) d2->setZero(z.rows(), z.cols());
      return;
    case Activation::Relu:
      if (a) *a = z.cwiseMax(0.0);
      if (d1) *d1 = (z.array() > 0.0).cast<double>().matrix();
      if (d2) d2->setZero(z.rows(), z.cols());
      return;
    case Activation::Softplus: {
      // One exp per element serves the value and both derivatives.
      if (a) a->resize(z.rows(), z.cols());
      if (d1) d1->resize(z.rows(), z.cols());
      if (d2) d2->resize(z.rows(), z.cols());
      const double* zp = z.data();
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double x = beta * zp[i];
        const double e = std::exp(-std::fabs(x));
        if (a) a->data()[i] = (std::max(x, 0.0) + std::log1p(e)) / beta;
        const double s = x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        if (d1) d1->data()[i] = s;
        if (d2) d2->data()[i] = beta * s * (1.0 - s);
      }
      return;
    }
    case Activation::Sigmoid: {
      const Eigen::MatrixXd s = z.unaryExpr([](double v) { return logistic(v); });
      if (d1) *d1 = (s.array() * (1.0 - s.array())).matrix();
      if (d2) *d2 = (s.array() * (1.0 - s.array()) * (1.0 - 2.0 * s.array())).matrix();
      if (a) *a = s;
      return;
    }
  }
}

ad::SpatialDual activate(Activation act, double beta, const ad::SpatialDual& z) {
  switch (act) {
    case Activation::Identity: return z;
    case Activation::Relu: return ad::relu(z);
    case Activation::Softplus: return ad::softplus(z, beta);
    case Activation::Sigmoid: return ad::sigmoid(z);
  }
  return z;
}

template <typename T, typename SinFn, typename CosFn>
std::vector<T> pe_generic(std::span<const T> v, const PeConfig& cfg, SinFn sin_fn, CosFn cos_fn) {
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(cfg.output_dim(static_cast<int>(v.size()))));
  if (cfg.include_identity) out.insert(out.end(), v.begin(), v.end());
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double freq = std::ldexp(std::numbers::pi, k);
    for (const T& x : v) out.push_back(sin_fn(x, freq));
    for (const T& x : v) out.push_back(cos_fn(x, freq));
  }
  return out;
}

}  // namespace

std::vector<double> pe_encode(std::span<const double> v, const PeConfig& cfg) {
  return pe_generic<double>(
      v, cfg, [](double x, double w) { return std::sin(w * x); }, [](double x, double w) { return std::cos(w * x); });
}

std::vector<ad::Var> pe_encode(std::span<const ad::Var> v, const PeConfig& cfg) {
  return pe_generic<ad::Var>(
      v, cfg, [](const ad::Var& x, double w) { return ad::sin(ad::Var(w) * x); },
      [](const ad::Var& x, double w) { return ad::cos(ad::Var(w) * x); });
}

std::vector<ad::SpatialDual> pe_encode(std::span<const ad::SpatialDual> v, const PeConfig& cfg) {
  return pe_generic<ad::SpatialDual>(
      v, cfg, [](const ad::SpatialDual& x, double w) { return ad::sin(ad::Var(w) * x); },
      [](const ad::SpatialDual& x, double w) { return ad::cos(ad::Var(w) * x); });
}

Eigen::MatrixXd pe_encode_batch(const Eigen::MatrixXd& x, const PeConfig& cfg, std::vector<Eigen::MatrixXd>* jacobian) {
  const auto dim = static_cast<int>(x.rows());
  const auto n = x.cols();
  Eigen::MatrixXd out(cfg.output_dim(dim), n);
  if (jacobian) jacobian->assign(static_cast<std::size_t>(dim), Eigen::MatrixXd::Zero(out.rows(), n));
  int row = 0;
  if (cfg.include_identity) {
    out.topRows(dim) = x;
    if (jacobian)
      for (int j = 0; j < dim; ++j) (*jacobian)[static_cast<std::size_t>(j)].row(j).setOnes();
    row = dim;
  }
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double freq = std::ldexp(std::numbers::pi, k);
    const Eigen::MatrixXd arg = freq * x;
    out.middleRows(row, dim) = arg.array().sin().matrix();
    out.middleRows(row + dim, dim) = arg.array().cos().matrix();
    if (jacobian) {
      for (int j = 0; j < dim; ++j) {
        auto& jac = (*jacobian)[static_cast<std::size_t>(j)];
        jac.row(row + j) = freq * arg.row(j).array().cos().matrix();
        jac.row(row + dim + j) = -freq * arg.row(j).array().sin().matrix();
      }
    }
    row += 2 * dim;
  }
  return out;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("", "unknown activation '" + name + "'");
}

void MlpConfig::validate() const {
  if (input_dim <= 0 || output_dim <= 0 || hidden_width <= 0 || depth < 0)
    throw UsageError("MlpConfig: dimensions must be positive");
  for (int s : skip_layers) {
    if (s <= 0 || s > depth) throw UsageError("MlpConfig: skip layer index out of range");
    if (hidden_width <= input_dim) throw UsageError("MlpConfig: skip connection needs hidden_width > input_dim");
  }
}

bool MlpConfig::is_skip(int layer) const {
  return std::find(skip_layers.begin(), skip_layers.end(), layer) != skip_layers.end();
}

int MlpConfig::layer_in_dim(int layer) const { return layer == 0 ? input_dim : hidden_width; }

int MlpConfig::layer_out_dim(int layer) const {
  if (layer == depth) return output_dim;
  return is_skip(layer + 1) ? hidden_width - input_dim : hidden_width;
}

Mlp Mlp::zeros(const MlpConfig& cfg) {
  cfg.validate();
  Mlp m;
  m.cfg = cfg;
  for (int l = 0; l <= cfg.depth; ++l) {
    m.weights.push_back(Eigen::MatrixXd::Zero(cfg.layer_out_dim(l), cfg.layer_in_dim(l)));
    m.biases.push_back(Eigen::MatrixXd::Zero(cfg.layer_out_dim(l), 1));
  }
  return m;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

void default_init(Mlp& mlp, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(mlp.weights[l].cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < mlp.weights[l].size(); ++i) mlp.weights[l](i) = u(rng);
    for (Eigen::Index i = 0; i < mlp.biases[l].size(); ++i) mlp.biases[l](i) = u(rng);
  }
}

void geometric_init(Mlp& mlp, double radius, int identity_dims, std::uint64_t seed) {
  const MlpConfig& cfg = mlp.cfg;
  if (identity_dims <= 0 || identity_dims > cfg.input_dim)
    throw UsageError("geometric_init: input must start with the raw coordinates");
  Rng rng(seed);
  for (int l = 0; l <= cfg.depth; ++l) {
    auto& w = mlp.weights[static_cast<std::size_t>(l)];
    auto& b = mlp.biases[static_cast<std::size_t>(l)];
    if (l == cfg.depth) {
      const double in = static_cast<double>(w.cols());
      std::normal_distribution<double> nd(std::sqrt(std::numbers::pi) / std::sqrt(in), 1e-4);
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
      b.setConstant(-radius);
      continue;
    }
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(w.rows())));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
    b.setZero();
    if (l == 0) {
      w.rightCols(w.cols() - identity_dims).setZero();
    } else if (cfg.is_skip(l)) {
      // Appended input occupies the last input_dim columns; zero its encoded part.
      w.rightCols(cfg.input_dim - identity_dims).setZero();
    }
  }
}

MlpConfig NetworkConfig::sdf_config() const {
  MlpConfig c;
  c.input_dim = position_pe.output_dim(dim);
  c.output_dim = 1 + feature_dim;
  c.hidden_width = sdf_width;
  c.depth = sdf_depth;
  c.activation = Activation::Softplus;
  c.softplus_beta = softplus_beta;
  c.skip_layers = sdf_skips;
  c.output_activation = Activation::Identity;
  return c;
}

MlpConfig NetworkConfig::radiance_config(const PeConfig& direction_pe) const {
  MlpConfig c;
  c.input_dim = radiance_position_pe.output_dim(dim) + direction_pe.output_dim(dim) + dim + feature_dim;
  c.output_dim = 3;
  c.hidden_width = radiance_width;
  c.depth = radiance_depth;
  c.activation = Activation::Relu;
  c.output_activation = Activation::Sigmoid;
  return c;
}

double FieldBundle::s() const { return std::exp(log_s(0, 0)); }
double FieldBundle::gamma() const { return std::exp(10.0 * gamma_b(0, 0)); }

std::vector<FieldBundle::NamedTensor> FieldBundle::tensors() {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < sdf.weights.size(); ++l) {
    out.push_back({"sdf." + std::to_string(l) + ".weight", &sdf.weights[l]});
    out.push_back({"sdf." + std::to_string(l) + ".bias", &sdf.biases[l]});
  }
  for (std::size_t l = 0; l < radiance.weights.size(); ++l) {
    out.push_back({"radiance." + std::to_string(l) + ".weight", &radiance.weights[l]});
    out.push_back({"radiance." + std::to_string(l) + ".bias", &radiance.biases[l]});
  }
  out.push_back({"log_s", &log_s});
  if (has_gamma_b) out.push_back({"gamma_b", &gamma_b});
  return out;
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> FieldBundle::tensors() const {
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
  for (auto& t : const_cast<FieldBundle*>(this)->tensors()) out.emplace_back(t.name, t.value);
  return out;
}

FieldBundle FieldBundle::zeros_like() const {
  FieldBundle z = *this;
  z.set_zero();
  return z;
}

void FieldBundle::set_zero() {
  for (auto& t : tensors()) t.value->setZero();
}

std::size_t FieldBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.second->size());
  return n;
}

FieldBundle make_field_bundle(const NetworkConfig& net, const PeConfig& direction_pe, bool with_gamma_b,
                              double gamma_b_init, std::uint64_t seed) {
  if (net.dim != 2 && net.dim != 3) throw ConfigError("network.dim", "must be 2 or 3");
  if (!net.position_pe.include_identity) throw ConfigError("network.position_pe.identity", "geometric init needs the identity channel");
  if (!(net.s_init > 0.0)) throw ConfigError("network.s_init", "must be positive");
  FieldBundle b;
  b.net = net;
  b.direction_pe = direction_pe;
  b.sdf = Mlp::zeros(net.sdf_config());
  b.radiance = Mlp::zeros(net.radiance_config(direction_pe));
  geometric_init(b.sdf, net.init_radius, net.dim, derive_seed(seed, "init", 0));
  default_init(b.radiance, derive_seed(seed, "init", 1));
  b.log_s(0, 0) = std::log(net.s_init);
  b.has_gamma_b = with_gamma_b;
  b.gamma_b(0, 0) = with_gamma_b ? gamma_b_init : 0.0;
  return b;
}

void MlpBatch::forward(const Mlp& mlp, const Eigen::MatrixXd& x, std::span<const Eigen::MatrixXd> x_tangents) {
  const MlpConfig& cfg = mlp.cfg;
  if (x.rows() != cfg.input_dim) throw UsageError("MlpBatch::forward: input has wrong row count");
  tangents_ = static_cast<int>(x_tangents.size());
  const auto layers = static_cast<std::size_t>(cfg.depth + 1);
  const auto nt = static_cast<std::size_t>(tangents_);
  layer_in_.resize(layers);
  layer_in_t_.assign(layers, std::vector<Eigen::MatrixXd>(nt));
  pre_.resize(layers);
  pre_t_.assign(layers, std::vector<Eigen::MatrixXd>(nt));
  post_.resize(layers);
  post_t_.assign(layers, std::vector<Eigen::MatrixXd>(nt));

  layer_in_[0] = x;
  for (std::size_t j = 0; j < nt; ++j) layer_in_t_[0][j] = x_tangents[j];

  Eigen::MatrixXd d1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = mlp.weights[l];
    pre_[l].noalias() = w * layer_in_[l];
    pre_[l].colwise() += mlp.biases[l].col(0);
    const bool last = l + 1 == layers;
    const Activation act = last ? cfg.output_activation : cfg.activation;
    activate(act, cfg.softplus_beta, pre_[l], &post_[l], nt ? &d1 : nullptr, nullptr);
    for (std::size_t j = 0; j < nt; ++j) {
      pre_t_[l][j].noalias() = w * layer_in_t_[l][j];
      post_t_[l][j] = d1.cwiseProduct(pre_t_[l][j]);
    }
    if (last) break;
    const int next = static_cast<int>(l) + 1;
    if (cfg.is_skip(next)) {
      auto& in = layer_in_[l + 1];
      in.resize(cfg.hidden_width, x.cols());
      in << post_[l], x;
      in *= kInvSqrt2;
      for (std::size_t j = 0; j < nt; ++j) {
        auto& it = layer_in_t_[l + 1][j];
        it.resize(cfg.hidden_width, x.cols());
        it << post_t_[l][j], x_tangents[j];
        it *= kInvSqrt2;
      }
    } else {
      layer_in_[l + 1] = post_[l];
      for (std::size_t j = 0; j < nt; ++j) layer_in_t_[l + 1][j] = post_t_[l][j];
    }
  }
}

Eigen::MatrixXd MlpBatch::backward(const Mlp& mlp, const Eigen::MatrixXd& out_adj,
                                   std::span<const Eigen::MatrixXd> out_tangent_adj, Mlp& grads) const {
  const MlpConfig& cfg = mlp.cfg;
  const auto layers = static_cast<std::size_t>(cfg.depth + 1);
  const auto nt = static_cast<std::size_t>(tangents_);
  const auto n = layer_in_[0].cols();
  if (!out_tangent_adj.empty() && out_tangent_adj.size() != nt)
    throw UsageError("MlpBatch::backward: tangent adjoint count mismatch");

  Eigen::MatrixXd x_adj = Eigen::MatrixXd::Zero(cfg.input_dim, n);
  Eigen::MatrixXd a_bar = out_adj;
  std::vector<Eigen::MatrixXd> at_bar(nt);
  bool have_t = !out_tangent_adj.empty();
  for (std::size_t j = 0; j < nt; ++j)
    at_bar[j] = have_t ? out_tangent_adj[j] : Eigen::MatrixXd::Zero(out_adj.rows(), n);

  Eigen::MatrixXd d1;
  Eigen::MatrixXd d2;
  Eigen::MatrixXd z_bar;
  std::vector<Eigen::MatrixXd> zt_bar(nt);
  for (std::size_t l = layers; l-- > 0;) {
    const bool last = l + 1 == layers;
    const Activation act = last ? cfg.output_activation : cfg.activation;
    activate(act, cfg.softplus_beta, pre_[l], nullptr, &d1, nt ? &d2 : nullptr);
    z_bar = a_bar.cwiseProduct(d1);
    for (std::size_t j = 0; j < nt; ++j) {
      z_bar.array() += at_bar[j].array() * d2.array() * pre_t_[l][j].array();
      zt_bar[j] = at_bar[j].cwiseProduct(d1);
    }
    grads.weights[l].noalias() += z_bar * layer_in_[l].transpose();
    for (std::size_t j = 0; j < nt; ++j) grads.weights[l].noalias() += zt_bar[j] * layer_in_t_[l][j].transpose();
    grads.biases[l].col(0) += z_bar.rowwise().sum();

    const auto& w = mlp.weights[l];
    Eigen::MatrixXd in_bar = w.transpose() * z_bar;
    std::vector<Eigen::MatrixXd> in_t_bar(nt);
    for (std::size_t j = 0; j < nt; ++j) in_t_bar[j] = w.transpose() * zt_bar[j];

    if (l == 0) {
      x_adj += in_bar;
    } else if (cfg.is_skip(static_cast<int>(l))) {
      const auto h = static_cast<Eigen::Index>(cfg.hidden_width - cfg.input_dim);
      a_bar = kInvSqrt2 * in_bar.topRows(h);
      x_adj += kInvSqrt2 * in_bar.bottomRows(cfg.input_dim);
      for (std::size_t j = 0; j < nt; ++j) at_bar[j] = kInvSqrt2 * in_t_bar[j].topRows(h);
    } else {
      a_bar = std::move(in_bar);
      for (std::size_t j = 0; j < nt; ++j) at_bar[j] = std::move(in_t_bar[j]);
    }
  }
  return x_adj;
}

Eigen::VectorXd sdf_values(const FieldBundle& bundle, const Eigen::MatrixXd& points) {
  if (points.rows() != bundle.dim()) throw UsageError("sdf_values: point dimension mismatch");
  Eigen::VectorXd f(points.cols());
  constexpr Eigen::Index kChunk = 4096;
  MlpBatch batch;
  for (Eigen::Index start = 0; start < points.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - start);
    batch.forward(bundle.sdf, pe_encode_batch(points.middleCols(start, len), bundle.net.position_pe));
    f.segment(start, len) = batch.output().row(0).transpose();
  }
  return f;
}

TapeMlp bind_to_tape(ad::Tape& tape, const Mlp& mlp, bool as_parameters) {
  TapeMlp t;
  t.cfg = mlp.cfg;
  auto bind = [&](double v) { return as_parameters ? tape.parameter(v) : ad::Var(v); };
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const auto& w = mlp.weights[l];
    std::vector<ad::Var> wl;
    wl.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) wl.push_back(bind(w(r, c)));
    std::vector<ad::Var> bl;
    for (Eigen::Index r = 0; r < mlp.biases[l].rows(); ++r) bl.push_back(bind(mlp.biases[l](r, 0)));
    t.weights.push_back(std::move(wl));
    t.biases.push_back(std::move(bl));
  }
  return t;
}

std::vector<ad::SpatialDual> evaluate(const TapeMlp& mlp, std::span<const ad::SpatialDual> input) {
  const MlpConfig& cfg = mlp.cfg;
  if (static_cast<int>(input.size()) != cfg.input_dim) throw UsageError("TapeMlp: input size mismatch");
  const int dim = input.empty() ? 0 : input.front().dim;
  std::vector<ad::SpatialDual> in(input.begin(), input.end());
  for (int l = 0; l <= cfg.depth; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    const int rows = cfg.layer_out_dim(l);
    const int cols = cfg.layer_in_dim(l);
    const Activation act = l == cfg.depth ? cfg.output_activation : cfg.activation;
    std::vector<ad::SpatialDual> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      ad::SpatialDual acc = ad::SpatialDual::constant(mlp.biases[ls][static_cast<std::size_t>(r)], dim);
      for (int c = 0; c < cols; ++c)
        acc = acc + mlp.weights[ls][static_cast<std::size_t>(r * cols + c)] * in[static_cast<std::size_t>(c)];
      out.push_back(activate(act, cfg.softplus_beta, acc));
    }
    if (l == cfg.depth) return out;
    if (cfg.is_skip(l + 1)) {
      out.insert(out.end(), input.begin(), input.end());
      for (auto& v : out) v = ad::Var(kInvSqrt2) * v;
    }
    in = std::move(out);
  }
  return in;
}

TapeField bind_to_tape(ad::Tape& tape, const FieldBundle& bundle, bool as_parameters) {
  TapeField f;
  f.bundle = &bundle;
  f.sdf = bind_to_tape(tape, bundle.sdf, as_parameters);
  f.radiance = bind_to_tape(tape, bundle.radiance, as_parameters);
  f.log_s = as_parameters ? tape.parameter(bundle.log_s(0, 0)) : ad::Var(bundle.log_s(0, 0));
  f.gamma_b = as_parameters && bundle.has_gamma_b ? tape.parameter(bundle.gamma_b(0, 0)) : ad::Var(bundle.gamma_b(0, 0));
  return f;
}

namespace {
std::vector<ad::SpatialDual> encoded_position(const TapeField& field, const Vec3& x, bool with_tangents) {
  const int dim = field.bundle->dim();
  std::vector<ad::SpatialDual> coords;
  for (int i = 0; i < dim; ++i)
    coords.push_back(with_tangents ? ad::SpatialDual::coordinate(ad::Var(x[i]), i, dim)
                                   : ad::SpatialDual::constant(ad::Var(x[i]), 0));
  return pe_encode(std::span<const ad::SpatialDual>(coords), field.bundle->net.position_pe);
}

void check_point(const Vec3& x) {
  if (!x.allFinite()) throw NumericError("sdf evaluation at a non-finite point");
}
}  // namespace

SdfPoint sdf_eval(const TapeField& field, const Vec3& x) {
  check_point(x);
  const auto out = evaluate(field.sdf, encoded_position(field, x, false));
  SdfPoint p;
  p.f = out[0].primal;
  for (std::size_t i = 1; i < out.size(); ++i) p.features.push_back(out[i].primal);
  return p;
}

SdfGradientPoint sdf_gradient(const TapeField& field, const Vec3& x) {
  check_point(x);
  const auto out = evaluate(field.sdf, encoded_position(field, x, true));
  SdfGradientPoint p;
  p.f = out[0].primal;
  for (int i = 0; i < field.bundle->dim(); ++i) p.gradient[static_cast<std::size_t>(i)] = out[0].tangent[i];
  for (std::size_t i = 1; i < out.size(); ++i) p.features.push_back(out[i].primal);
  return p;
}

std::array<ad::Var, 3> radiance_eval(const TapeField& field, const Vec3& x, std::span<const ad::Var> direction_features,
                                     std::span<const ad::Var> normal, std::span<const ad::Var> geo_features) {
  const int dim = field.bundle->dim();
  std::vector<double> xs(x.data(), x.data() + dim);
  std::vector<ad::SpatialDual> in;
  for (double v : pe_encode(std::span<const double>(xs), field.bundle->net.radiance_position_pe))
    in.push_back(ad::SpatialDual::constant(ad::Var(v), 0));
  for (const auto& v : direction_features) in.push_back(ad::SpatialDual::constant(v, 0));
  for (const auto& v : normal) in.push_back(ad::SpatialDual::constant(v, 0));
  for (const auto& v : geo_features) in.push_back(ad::SpatialDual::constant(v, 0));
  const auto out = evaluate(field.radiance, in);
  return {out[0].primal, out[1].primal, out[2].primal};
}

}  // namespace dirsurf::nets
