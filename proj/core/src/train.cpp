#include "dirsurf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "dirsurf/config.hpp"
#include "dirsurf/errors.hpp"
#include "dirsurf/io.hpp"

namespace dirsurf::train {

void LossWeights::validate() const {
  if (!(color >= 0.0)) throw ConfigError("color", "must be >= 0");
  if (!(eikonal >= 0.0)) throw ConfigError("eikonal", "must be >= 0");
  if (!(mask >= 0.0)) throw ConfigError("mask", "must be >= 0");
}

double LrSchedule::at(int step, int total_steps) const {
  if (warmup > 0 && step <= warmup) return base * step / warmup;
  const double span = std::max(total_steps - warmup, 1);
  const double progress = std::clamp((step - warmup) / span, 0.0, 1.0);
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  if (rays_per_batch < 1) throw ConfigError("rays_per_batch", "must be >= 1");
  if (!(lr.base >= 0.0)) throw ConfigError("lr.base", "must be >= 0");
  if (!(lr.floor >= 0.0)) throw ConfigError("lr.floor", "must be >= 0");
  if (lr.warmup < 0) throw ConfigError("lr.warmup", "must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam.beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam.beta2", "must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam.epsilon", "must be positive");
  if (!(masked_fraction >= 0.0 && masked_fraction <= 1.0)) throw ConfigError("masked_fraction", "must lie in [0, 1]");
  if (eikonal_points < 0) throw ConfigError("eikonal_points", "must be >= 0");
  if (log_every < 1) throw ConfigError("log_every", "must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every", "must be >= 0");
  if (eval_every > 0 && eval_every % log_every != 0)
    throw ConfigError("eval_every", "must be a multiple of log_every");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
  if (eval_resolution < 2) throw ConfigError("eval_resolution", "must be >= 2");
  if (eval_points < 1) throw ConfigError("eval_points", "must be >= 1");
}

// ---------------------------------------------------------------------------
// Losses

ad::Var color_loss(std::span<const render::RgbVar> rendered, std::span<const Rgb> target) {
  if (rendered.size() != target.size() || rendered.empty()) throw UsageError("color_loss: batch sizes differ or are empty");
  ad::Var sum(0.0);
  for (std::size_t i = 0; i < rendered.size(); ++i)
    for (int k = 0; k < 3; ++k) sum = sum + ad::abs(rendered[i][static_cast<std::size_t>(k)] - ad::Var(target[i][k]));
  return sum / ad::Var(3.0 * static_cast<double>(rendered.size()));
}

ad::Var eikonal_loss(std::span<const dirparam::VarVec> gradients) {
  if (gradients.empty()) throw UsageError("eikonal_loss: no points");
  ad::Var sum(0.0);
  for (const auto& g : gradients) {
    ad::Var nsq(0.0);
    for (const auto& c : g)
      if (!(c.is_constant() && c.value() == 0.0)) nsq = nsq + c * c;
    const ad::Var norm = nsq.value() > 0.0 ? ad::sqrt(nsq) : ad::Var(0.0);
    const ad::Var r = norm - ad::Var(1.0);
    sum = sum + r * r;
  }
  return sum / ad::Var(static_cast<double>(gradients.size()));
}

ad::Var eikonal_loss(render::Field& field, const Eigen::MatrixXd& points) {
  const render::Geometry g = field.geometry(points);
  return eikonal_loss(g.gradient);
}

ad::Var mask_loss(std::span<const ad::Var> accumulated, std::span<const double> mask) {
  if (accumulated.size() != mask.size() || accumulated.empty()) throw UsageError("mask_loss: batch sizes differ or are empty");
  ad::Var sum(0.0);
  for (std::size_t i = 0; i < accumulated.size(); ++i) {
    ad::Var a = accumulated[i];
    if (a.value() < kMaskClamp) a = ad::Var(kMaskClamp);
    else if (a.value() > 1.0 - kMaskClamp) a = ad::Var(1.0 - kMaskClamp);
    const double m = mask[i];
    if (m != 0.0) sum = sum - ad::Var(m) * ad::log(a);
    if (m != 1.0) sum = sum - ad::Var(1.0 - m) * ad::log(ad::Var(1.0) - a);
  }
  return sum / ad::Var(static_cast<double>(accumulated.size()));
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m, Eigen::MatrixXd& v, int t,
                 double lr, const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

Adam::Adam(const nets::FieldBundle& params, AdamConfig c) : cfg(c), m(params.zeros_like()), v(params.zeros_like()) {}

void Adam::step(nets::FieldBundle& params, nets::FieldBundle& grads, double lr) {
  ++t;
  auto p = params.tensors();
  auto g = grads.tensors();
  auto mt = m.tensors();
  auto vt = v.tensors();
  if (p.size() != g.size() || p.size() != mt.size() || p.size() != vt.size())
    throw UsageError("Adam: parameter structure changed");
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(*p[i].value, *g[i].value, *mt[i].value, *vt[i].value, t, lr, cfg);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const scenes::Dataset& data, nets::FieldBundle bundle, dirparam::DirectionalConfig dcfg,
                 TrainConfig tcfg, render::SamplingConfig sampling, LossWeights weights, std::uint64_t seed)
    : data_(data),
      bundle_(std::move(bundle)),
      dcfg_(dcfg),
      tcfg_(tcfg),
      sampling_(sampling),
      weights_(weights),
      seed_(seed) {
  tcfg_.validate();
  weights_.validate();
  if (data_.scene.dim != bundle_.dim()) throw ConfigError("network.dim", "does not match the dataset dimension");
  if (bundle_.has_gamma_b != dcfg_.uses_gamma_b())
    throw UsageError("Trainer: gamma_b must be registered exactly in hybrid mode");
  grads_ = bundle_.zeros_like();
  adam_ = Adam(bundle_, tcfg_.adam);
  rays_.resize(data_.views.size());
  for (std::size_t v = 0; v < data_.views.size(); ++v) {
    const auto& view = data_.views[v];
    for (int y = 0; y < view.camera.height; ++y) {
      for (int x = 0; x < view.camera.width; ++x) {
        auto ray = view.camera.ray(x, y, data_.scene.bound_radius);
        rays_[v].push_back(ray);
        if (!ray) continue;
        const PixelRef ref{static_cast<int>(v), x, y};
        (view.mask.at(x, y, 0) > 0.5 ? masked_ : unmasked_).push_back(ref);
      }
    }
  }
  if (masked_.empty() && unmasked_.empty()) throw UsageError("Trainer: dataset has no usable pixels");
}

std::vector<PixelRef> Trainer::sample_batch(int step) const {
  Rng rng = make_rng(seed_, "sampling", static_cast<std::uint64_t>(step));
  const int total = tcfg_.rays_per_batch;
  int n_masked = static_cast<int>(std::lround(tcfg_.masked_fraction * total));
  if (masked_.empty()) n_masked = 0;
  if (unmasked_.empty()) n_masked = total;
  std::vector<PixelRef> out;
  out.reserve(static_cast<std::size_t>(total));
  auto pick = [&](const std::vector<PixelRef>& from, int count) {
    std::uniform_int_distribution<std::size_t> u(0, from.size() - 1);
    for (int i = 0; i < count; ++i) out.push_back(from[u(rng)]);
  };
  pick(masked_, n_masked);
  pick(unmasked_, total - n_masked);
  return out;
}

StepMetrics Trainer::step() {
  const int step = adam_.t + 1;
  const auto pixels = sample_batch(step);
  const std::uint64_t step_seed = derive_seed(seed_, "sampling", static_cast<std::uint64_t>(step));
  std::vector<scenes::Ray> rays;
  std::vector<std::uint64_t> seeds;
  std::vector<Rgb> target;
  std::vector<double> mask;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto& p = pixels[i];
    const auto& view = data_.views[static_cast<std::size_t>(p.view)];
    rays.push_back(*rays_[static_cast<std::size_t>(p.view)][static_cast<std::size_t>(p.y * view.camera.width + p.x)]);
    seeds.push_back(derive_seed(step_seed, "ray", i));
    target.emplace_back(view.image.at(p.x, p.y, 0), view.image.at(p.x, p.y, 1), view.image.at(p.x, p.y, 2));
    mask.push_back(view.mask.at(p.x, p.y, 0));
  }

  tape_.clear();
  grads_.set_zero();
  render::NeuralField field(bundle_, &grads_);
  field.bind(&tape_);
  auto res = render::render_batch(field, dcfg_, rays, sampling_, seeds, data_.scene.background);

  std::vector<render::RgbVar> colors;
  std::vector<ad::Var> acc;
  for (const auto& r : res.rays) {
    colors.push_back(r.color);
    acc.push_back(r.accumulated);
  }
  const ad::Var l_color = color_loss(colors, target);
  const ad::Var l_mask = mask_loss(acc, mask);

  std::vector<dirparam::VarVec> grads = res.geometry.gradient;
  if (tcfg_.eikonal_points > 0) {
    Rng rng = make_rng(seed_, "eikonal", static_cast<std::uint64_t>(step));
    const int dim = bundle_.dim();
    Eigen::MatrixXd pts(dim, tcfg_.eikonal_points);
    const double r = data_.scene.bound_radius;
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
      for (int d = 0; d < dim; ++d) pts(d, i) = -r + 2.0 * r * uniform01(rng);
    const auto g = field.geometry(pts);
    grads.insert(grads.end(), g.gradient.begin(), g.gradient.end());
  }
  const ad::Var l_eik = eikonal_loss(grads);
  const ad::Var total = ad::Var(weights_.color) * l_color + ad::Var(weights_.eikonal) * l_eik +
                        ad::Var(weights_.mask) * l_mask;

  StepMetrics m;
  m.step = step;
  m.total = total.value();
  m.color = l_color.value();
  m.eikonal = l_eik.value();
  m.mask = l_mask.value();
  m.s = bundle_.s();
  m.gamma = bundle_.gamma();
  m.degenerate_normals = res.stats.degenerate_normals;
  m.degenerate_blends = res.stats.degenerate_blends;
  if (!std::isfinite(m.total)) throw NumericError("non-finite loss at step " + std::to_string(step));

  if (!total.is_constant()) {
    tape_.backward(total);
    field.collect(tape_);
  }
  m.lr = tcfg_.lr.at(step, tcfg_.iterations);
  adam_.step(bundle_, grads_, m.lr);
  for (const auto& t : bundle_.tensors())
    if (!t.value->allFinite()) throw NumericError("non-finite parameter '" + t.name + "' after step " + std::to_string(step));
  return m;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  write_checkpoint(path, bundle_, dcfg_, adam_.t, &adam_, {{"seed", seed_}});
}

void Trainer::restore(const std::filesystem::path& checkpoint) {
  Checkpoint ck = read_checkpoint(checkpoint);
  const auto a = ck.bundle.tensors();
  const auto b = bundle_.tensors();
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i)
    same = a[i].name == b[i].name && a[i].value->rows() == b[i].value->rows() && a[i].value->cols() == b[i].value->cols();
  if (!same) throw ConfigError("resume", "checkpoint does not match the configured network");
  if (!ck.adam) throw IoError("checkpoint has no optimizer state: " + checkpoint.string());
  bundle_ = std::move(ck.bundle);
  adam_ = std::move(*ck.adam);
  adam_.cfg = tcfg_.adam;
  grads_ = bundle_.zeros_like();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
io::NamedArray to_array(const std::string& name, const Eigen::MatrixXd& m) {
  io::NamedArray a;
  a.name = name;
  a.shape = {m.rows(), m.cols()};
  a.data.resize(static_cast<std::size_t>(m.size()));
  // Row-major on disk.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return a;
}

void from_array(const io::Container& c, const std::string& name, Eigen::MatrixXd& m, const std::filesystem::path& path) {
  const io::NamedArray* a = c.find(name);
  if (!a) throw IoError("checkpoint " + path.string() + " lacks tensor '" + name + "'");
  if (a->shape.size() != 2 || a->shape[0] != m.rows() || a->shape[1] != m.cols())
    throw IoError("checkpoint tensor '" + name + "' has an unexpected shape");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = a->data[static_cast<std::size_t>(r * m.cols() + col)];
}
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nets::FieldBundle& bundle,
                      const dirparam::DirectionalConfig& dcfg, int step, const Adam* adam, const nlohmann::json& extra) {
  nlohmann::json meta = extra;
  meta["format"] = "dirsurf-checkpoint";
  meta["version"] = 1;
  meta["step"] = step;
  meta["network"] = config::to_json(bundle.net);
  meta["direction"] = config::to_json(dcfg);
  meta["has_gamma_b"] = bundle.has_gamma_b;
  std::vector<io::NamedArray> arrays;
  for (const auto& [name, value] : bundle.tensors()) arrays.push_back(to_array(name, *value));
  if (adam) {
    meta["adam"] = {{"t", adam->t},
                    {"beta1", adam->cfg.beta1},
                    {"beta2", adam->cfg.beta2},
                    {"epsilon", adam->cfg.epsilon}};
    for (const auto& [name, value] : adam->m.tensors()) arrays.push_back(to_array("adam.m." + name, *value));
    for (const auto& [name, value] : adam->v.tensors()) arrays.push_back(to_array("adam.v." + name, *value));
  }
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  io::write_container(tmp, meta, arrays);
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path);
  if (c.meta.value("format", "") != "dirsurf-checkpoint") throw IoError("not a checkpoint: " + path.string());
  Checkpoint ck;
  ck.meta = c.meta;
  try {
    const auto net = config::network_from_json(c.meta.at("network"), "network");
    ck.direction = config::direction_from_json(c.meta.at("direction"), "direction");
    const bool has_gb = c.meta.value("has_gamma_b", false);
    ck.bundle = nets::make_field_bundle(net, ck.direction.direction_pe, has_gb, 0.0, 0);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint metadata unreadable: " + std::string(e.what()));
  }
  ck.step = c.meta.value("step", 0);
  for (auto& t : ck.bundle.tensors()) from_array(c, t.name, *t.value, path);
  if (c.meta.contains("adam")) {
    Adam a(ck.bundle, AdamConfig{c.meta["adam"].value("beta1", 0.9), c.meta["adam"].value("beta2", 0.999),
                                 c.meta["adam"].value("epsilon", 1e-8)});
    a.t = c.meta["adam"].value("t", 0);
    for (auto& t : a.m.tensors()) from_array(c, "adam.m." + t.name, *t.value, path);
    for (auto& t : a.v.tensors()) from_array(c, "adam.v." + t.name, *t.value, path);
    ck.adam = std::move(a);
  }
  return ck;
}

std::vector<std::string> checkpoint_parameter_names(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path);
  std::vector<std::string> names;
  for (const auto& a : c.arrays)
    if (a.name.rfind("adam.", 0) != 0) names.push_back(a.name);
  return names;
}

// ---------------------------------------------------------------------------
// Evaluation and the fit loop

SurfaceMetrics evaluate_surface(const eval::BatchSdf& field, const scenes::SceneSpec& scene, int resolution,
                                int points, std::uint64_t seed, int workers) {
  const eval::Bounds b = eval::cube_bounds(scene.dim, scene.bound_radius);
  const auto gt = eval::sample_analytic_surface(scene.sdf, b, points, derive_seed(seed, "eval-gt"));
  std::vector<Vec3> pred;
  if (scene.dim == 2) {
    pred = eval::sample_polylines(eval::marching_squares(field, b, resolution, workers), points,
                                  derive_seed(seed, "eval-pred"));
  } else {
    pred = eval::sample_mesh(eval::marching_cubes(field, b, resolution, workers), points, derive_seed(seed, "eval-pred"));
  }
  SurfaceMetrics m;
  if (pred.empty()) {
    m.empty = true;
    m.chamfer = m.accuracy = m.hausdorff = std::numeric_limits<double>::infinity();
    return m;
  }
  m.chamfer = eval::chamfer_distance(pred, gt);
  m.accuracy = eval::accuracy(pred, gt);
  m.hausdorff = eval::hausdorff_distance(pred, gt);
  return m;
}

std::string metrics_row(const StepMetrics& m, std::optional<double> chamfer) {
  std::string s = std::to_string(m.step);
  for (double v : {m.total, m.color, m.eikonal, m.mask, m.s, m.gamma}) s += "," + io::format_double(v);
  s += ",";
  if (chamfer) s += io::format_double(*chamfer);
  return s;
}

namespace {
/// Keeps the header and the rows up to `step` of an existing log.
std::string truncated_log(const std::filesystem::path& path, int step) {
  std::string out = std::string(kMetricsHeader) + "\n";
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int row_step = std::stoi(line.substr(0, line.find(',')));
    if (row_step <= step) out += line + "\n";
  }
  return out;
}
}  // namespace

FitResult fit(const scenes::Dataset& data, const nets::NetworkConfig& net_in, const dirparam::DirectionalConfig& dcfg,
              const TrainConfig& tcfg, const render::SamplingConfig& sampling, const LossWeights& weights,
              std::uint64_t seed, const FitOptions& opts) {
  nets::NetworkConfig net = net_in;
  net.dim = data.scene.dim;
  Trainer trainer(data, nets::make_field_bundle(net, dcfg.direction_pe, dcfg.uses_gamma_b(), dcfg.gamma_b_init, seed),
                  dcfg, tcfg, sampling, weights, seed);
  if (opts.resume) trainer.restore(*opts.resume);

  const bool writes = !opts.out_dir.empty();
  const auto log_path = opts.out_dir / "metrics.csv";
  std::ofstream log;
  if (writes) {
    std::filesystem::create_directories(opts.out_dir);
    const std::string head = opts.resume ? truncated_log(log_path, trainer.step_count()) : std::string(kMetricsHeader) + "\n";
    io::write_text(log_path, head);
    log.open(log_path, std::ios::app | std::ios::binary);
    if (!log) throw IoError("cannot append to " + log_path.string());
  }

  FitResult result;
  std::filesystem::path last_good = opts.resume ? *opts.resume : std::filesystem::path();
  auto checkpoint = [&](const std::filesystem::path& p) {
    trainer.save_checkpoint(p);
    last_good = p;
  };

  const int end = opts.stop_after > 0 ? std::min(opts.stop_after, tcfg.iterations) : tcfg.iterations;
  while (trainer.step_count() < end) {
    StepMetrics m;
    try {
      m = trainer.step();
    } catch (const std::exception& e) {
      // Overflowing parameters surface either as non-finite values or as
      // domain violations further down (e.g. a sharpness that underflowed to 0).
      if (!dynamic_cast<const NumericError*>(&e) && !dynamic_cast<const DomainError*>(&e)) throw;
      throw NumericError(std::string(e.what()) + "; last good checkpoint: " +
                         (last_good.empty() ? std::string("none") : last_good.string()));
    }
    result.degenerate_normals += m.degenerate_normals;
    result.degenerate_blends += m.degenerate_blends;
    if (m.step % tcfg.log_every == 0) {
      std::optional<double> chamfer;
      if (tcfg.eval_every > 0 && m.step % tcfg.eval_every == 0) {
        const auto sm = evaluate_surface(eval::network_oracle(trainer.bundle()), data.scene, tcfg.eval_resolution,
                                         tcfg.eval_points, seed, opts.workers);
        chamfer = sm.chamfer;
        result.chamfer.emplace_back(m.step, sm.chamfer);
      }
      result.log.push_back(m);
      if (writes) {
        log << metrics_row(m, chamfer) << "\n";
        log.flush();
      }
      if (opts.on_log) opts.on_log(m);
    }
    if (writes && tcfg.checkpoint_every > 0 && m.step % tcfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%06d.ckpt", m.step);
      checkpoint(opts.out_dir / "checkpoints" / name);
    }
  }
  if (writes) {
    result.final_checkpoint = opts.out_dir / "checkpoint.ckpt";
    checkpoint(result.final_checkpoint);
  }
  result.final_step = trainer.step_count();
  result.bundle = trainer.bundle();
  return result;
}

}  // namespace dirsurf::train
