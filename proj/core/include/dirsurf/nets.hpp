#pragma once

// Field networks: positional encoding, MLPs, geometric initialization and the
// FieldBundle holding the SDF network, the radiance network and the two
// learnable scalars (S-density sharpness and the blend parameter gamma_b).
//
// Two evaluation routes exist for the same parameters:
//  * MlpBatch: column-batched Eigen kernel with forward spatial tangents and a
//    hand-written reverse pass (used for training and rendering);
//  * TapeMlp: every weight as a tape value, every activation a SpatialDual
//    (used as the reference the batch kernel is checked against).

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/spatial_dual.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::nets {

struct PeConfig {
  int num_frequencies = 0;
  bool include_identity = true;

  int output_dim(int input_dim) const { return input_dim * ((include_identity ? 1 : 0) + 2 * num_frequencies); }
};

/// [v?, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^{L-1} pi v), cos(2^{L-1} pi v)], one block per term.
std::vector<double> pe_encode(std::span<const double> v, const PeConfig& cfg);
std::vector<ad::Var> pe_encode(std::span<const ad::Var> v, const PeConfig& cfg);
std::vector<ad::SpatialDual> pe_encode(std::span<const ad::SpatialDual> v, const PeConfig& cfg);

/// Column-wise encoding of a (dim x N) block, optionally with the Jacobian
/// columns d(features)/d(x_j) for each input coordinate j.
Eigen::MatrixXd pe_encode_batch(const Eigen::MatrixXd& x, const PeConfig& cfg,
                                std::vector<Eigen::MatrixXd>* jacobian = nullptr);

enum class Activation { Identity, Relu, Softplus, Sigmoid };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct MlpConfig {
  int input_dim = 0;
  int output_dim = 0;
  int hidden_width = 0;
  int depth = 0;  ///< number of hidden layers; depth + 1 linear layers in total
  Activation activation = Activation::Relu;
  double softplus_beta = 100.0;
  std::vector<int> skip_layers;  ///< linear layer k receives [h, input] / sqrt(2)
  Activation output_activation = Activation::Identity;

  void validate() const;
  bool is_skip(int layer) const;
  int layer_in_dim(int layer) const;
  int layer_out_dim(int layer) const;
};

struct Mlp {
  MlpConfig cfg;
  std::vector<Eigen::MatrixXd> weights;  ///< layer l: out_l x in_l
  std::vector<Eigen::MatrixXd> biases;   ///< layer l: out_l x 1

  static Mlp zeros(const MlpConfig& cfg);
  std::size_t parameter_count() const;
};

/// PyTorch-default style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
void default_init(Mlp& mlp, std::uint64_t seed);

/// SAL/IDR geometric initialization: output ~ |x| - radius. `identity_dims`
/// is the number of leading input channels carrying the raw coordinates; the
/// remaining (encoded) channels get zero first-layer and skip weights.
void geometric_init(Mlp& mlp, double radius, int identity_dims, std::uint64_t seed);

struct NetworkConfig {
  int dim = 2;
  PeConfig position_pe{4, true};
  PeConfig radiance_position_pe{4, true};
  int sdf_width = 64;
  int sdf_depth = 4;
  std::vector<int> sdf_skips{2};
  double softplus_beta = 100.0;
  int feature_dim = 32;
  int radiance_width = 64;
  int radiance_depth = 3;
  double init_radius = 0.5;
  double s_init = 20.0;

  MlpConfig sdf_config() const;
  MlpConfig radiance_config(const PeConfig& direction_pe) const;
};

/// Learnable state of one reconstruction.
struct FieldBundle {
  NetworkConfig net;
  PeConfig direction_pe;
  Mlp sdf;
  Mlp radiance;
  Eigen::MatrixXd log_s = Eigen::MatrixXd::Zero(1, 1);    ///< s = exp(log_s) > 0
  Eigen::MatrixXd gamma_b = Eigen::MatrixXd::Zero(1, 1);  ///< gamma = exp(10 gamma_b)
  bool has_gamma_b = false;

  int dim() const { return net.dim; }
  double s() const;
  double gamma() const;

  struct NamedTensor {
    std::string name;
    Eigen::MatrixXd* value;
  };
  /// Every learnable tensor in a fixed order; gamma_b only when registered.
  std::vector<NamedTensor> tensors();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;

  /// Same structure, all zeros (gradient and optimizer-moment storage).
  FieldBundle zeros_like() const;
  void set_zero();
  std::size_t parameter_count() const;
};

FieldBundle make_field_bundle(const NetworkConfig& net, const PeConfig& direction_pe, bool with_gamma_b,
                              double gamma_b_init, std::uint64_t seed);

/// Batched MLP evaluation over N columns with optional spatial tangents.
class MlpBatch {
 public:
  /// `x`: in x N. `x_tangents`: one (in x N) matrix per spatial coordinate, or empty.
  void forward(const Mlp& mlp, const Eigen::MatrixXd& x, std::span<const Eigen::MatrixXd> x_tangents = {});

  const Eigen::MatrixXd& output() const { return post_.back(); }
  const Eigen::MatrixXd& output_tangent(int j) const { return post_t_.back()[static_cast<std::size_t>(j)]; }
  int tangent_count() const { return tangents_; }

  /// Reverse pass. Adds parameter gradients into `grads` (same shape as the
  /// evaluated MLP) and returns the adjoint of the input block.
  Eigen::MatrixXd backward(const Mlp& mlp, const Eigen::MatrixXd& out_adj,
                           std::span<const Eigen::MatrixXd> out_tangent_adj, Mlp& grads) const;

 private:
  int tangents_ = 0;
  std::vector<Eigen::MatrixXd> layer_in_;                 // input to linear layer l
  std::vector<std::vector<Eigen::MatrixXd>> layer_in_t_;  // its tangents
  std::vector<Eigen::MatrixXd> pre_;                      // z_l
  std::vector<std::vector<Eigen::MatrixXd>> pre_t_;
  std::vector<Eigen::MatrixXd> post_;  // a_l
  std::vector<std::vector<Eigen::MatrixXd>> post_t_;
};

/// Values only: f(x) for a (dim x N) block of points.
Eigen::VectorXd sdf_values(const FieldBundle& bundle, const Eigen::MatrixXd& points);

/// Weights of one MLP bound to a tape, either as parameters or as constants.
struct TapeMlp {
  MlpConfig cfg;
  std::vector<std::vector<ad::Var>> weights;  // row-major per layer
  std::vector<std::vector<ad::Var>> biases;
};

TapeMlp bind_to_tape(ad::Tape& tape, const Mlp& mlp, bool as_parameters);
std::vector<ad::SpatialDual> evaluate(const TapeMlp& mlp, std::span<const ad::SpatialDual> input);

/// The whole bundle on a tape (reference route).
struct TapeField {
  const FieldBundle* bundle = nullptr;
  TapeMlp sdf;
  TapeMlp radiance;
  ad::Var log_s;
  ad::Var gamma_b;
};

TapeField bind_to_tape(ad::Tape& tape, const FieldBundle& bundle, bool as_parameters);

struct SdfPoint {
  ad::Var f;
  std::vector<ad::Var> features;
};
struct SdfGradientPoint {
  ad::Var f;
  std::array<ad::Var, 3> gradient{};
  std::vector<ad::Var> features;
};

SdfPoint sdf_eval(const TapeField& field, const Vec3& x);
SdfGradientPoint sdf_gradient(const TapeField& field, const Vec3& x);
std::array<ad::Var, 3> radiance_eval(const TapeField& field, const Vec3& x, std::span<const ad::Var> direction_features,
                                     std::span<const ad::Var> normal, std::span<const ad::Var> geo_features);

}  // namespace dirsurf::nets
