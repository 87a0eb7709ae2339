#pragma once

// Losses, Adam, the learning-rate schedule and the training loop.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dirsurf/dirparam.hpp"
#include "dirsurf/eval.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/render.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::train {

struct LossWeights {
  double color = 1.0;
  double eikonal = 0.1;
  double mask = 0.1;
  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Linear warmup to `base`, then cosine decay to `floor` at the last step.
struct LrSchedule {
  double base = 5e-4;
  int warmup = 500;
  double floor = 5e-6;
  double at(int step, int total_steps) const;  ///< step counts from 1
};

struct TrainConfig {
  int iterations = 5000;
  int rays_per_batch = 256;
  LrSchedule lr;
  AdamConfig adam;
  double masked_fraction = 0.75;  ///< 3:1 masked to unmasked pixels
  int eikonal_points = 128;       ///< uniform points in the bounding cube per step
  int log_every = 50;
  int eval_every = 1000;        ///< 0 disables periodic Chamfer snapshots
  int checkpoint_every = 1000;  ///< 0: final checkpoint only
  int eval_resolution = 256;
  int eval_points = 10000;
  void validate() const;
};

inline constexpr double kMaskClamp = 1e-4;

/// Mean absolute error over rays and channels.
ad::Var color_loss(std::span<const render::RgbVar> rendered, std::span<const Rgb> target);
/// Mean of (|g| - 1)^2.
ad::Var eikonal_loss(std::span<const dirparam::VarVec> gradients);
/// Eikonal loss of a field at the given points (dim x N).
ad::Var eikonal_loss(render::Field& field, const Eigen::MatrixXd& points);
/// Mean binary cross-entropy of the clamped accumulated weights against the mask.
ad::Var mask_loss(std::span<const ad::Var> accumulated, std::span<const double> mask);

/// One bias-corrected Adam update on a single tensor; `t` is the 1-based step.
void adam_update(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m, Eigen::MatrixXd& v, int t,
                 double lr, const AdamConfig& cfg);

class Adam {
 public:
  Adam() = default;
  Adam(const nets::FieldBundle& params, AdamConfig cfg);
  void step(nets::FieldBundle& params, nets::FieldBundle& grads, double lr);

  AdamConfig cfg;
  int t = 0;
  nets::FieldBundle m;
  nets::FieldBundle v;
};

struct StepMetrics {
  int step = 0;
  double total = 0.0;
  double color = 0.0;
  double eikonal = 0.0;
  double mask = 0.0;
  double s = 0.0;
  double gamma = 0.0;
  double lr = 0.0;
  long degenerate_normals = 0;
  long degenerate_blends = 0;
};

struct PixelRef {
  int view = 0;
  int x = 0;
  int y = 0;
};

class Trainer {
 public:
  Trainer(const scenes::Dataset& data, nets::FieldBundle bundle, dirparam::DirectionalConfig dcfg, TrainConfig tcfg,
          render::SamplingConfig sampling, LossWeights weights, std::uint64_t seed);

  /// Runs the next step; throws NumericError on a non-finite loss.
  StepMetrics step();

  int step_count() const { return adam_.t; }
  const nets::FieldBundle& bundle() const { return bundle_; }
  const Adam& optimizer() const { return adam_; }
  const dirparam::DirectionalConfig& direction() const { return dcfg_; }
  const TrainConfig& config() const { return tcfg_; }
  std::uint64_t seed() const { return seed_; }

  /// The training pixels for `step` (deterministic in seed and step).
  std::vector<PixelRef> sample_batch(int step) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer moments and the step counter.
  void restore(const std::filesystem::path& checkpoint);

 private:
  const scenes::Dataset& data_;
  nets::FieldBundle bundle_;
  nets::FieldBundle grads_;
  dirparam::DirectionalConfig dcfg_;
  TrainConfig tcfg_;
  render::SamplingConfig sampling_;
  LossWeights weights_;
  std::uint64_t seed_;
  Adam adam_;
  ad::Tape tape_;
  std::vector<PixelRef> masked_;
  std::vector<PixelRef> unmasked_;
  std::vector<std::vector<std::optional<scenes::Ray>>> rays_;
};

struct Checkpoint {
  nets::FieldBundle bundle;
  dirparam::DirectionalConfig direction;
  int step = 0;
  std::optional<Adam> adam;
  nlohmann::json meta;
};
void write_checkpoint(const std::filesystem::path& path, const nets::FieldBundle& bundle,
                      const dirparam::DirectionalConfig& dcfg, int step, const Adam* adam,
                      const nlohmann::json& extra_meta = nlohmann::json::object());
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Names of the parameter tensors stored in a checkpoint (optimizer moments excluded).
std::vector<std::string> checkpoint_parameter_names(const std::filesystem::path& path);

/// Chamfer of a field's extracted zero level set against the scene surface.
struct SurfaceMetrics {
  double chamfer = 0.0;
  double accuracy = 0.0;
  double hausdorff = 0.0;
  bool empty = false;  ///< nothing extracted; distances are +inf
};
SurfaceMetrics evaluate_surface(const eval::BatchSdf& field, const scenes::SceneSpec& scene, int resolution,
                                int points, std::uint64_t seed, int workers = 1);

inline constexpr const char* kMetricsHeader = "step,loss_total,loss_color,loss_eikonal,loss_mask,s,gamma,chamfer";

struct FitOptions {
  std::filesystem::path out_dir;          ///< metrics.csv and checkpoints; empty writes nothing
  int stop_after = 0;                     ///< stop once this step is reached (0: run to the end)
  std::optional<std::filesystem::path> resume;  ///< checkpoint to continue from
  int workers = 1;                        ///< evaluation only
  std::function<void(const StepMetrics&)> on_log;
};

struct FitResult {
  nets::FieldBundle bundle;
  std::vector<StepMetrics> log;
  std::vector<std::pair<int, double>> chamfer;  ///< eval snapshots
  int final_step = 0;
  std::filesystem::path final_checkpoint;
  long degenerate_normals = 0;
  long degenerate_blends = 0;
};

FitResult fit(const scenes::Dataset& data, const nets::NetworkConfig& net, const dirparam::DirectionalConfig& dcfg,
              const TrainConfig& tcfg, const render::SamplingConfig& sampling, const LossWeights& weights,
              std::uint64_t seed, const FitOptions& opts = {});

std::string metrics_row(const StepMetrics& m, std::optional<double> chamfer);

}  // namespace dirsurf::train
