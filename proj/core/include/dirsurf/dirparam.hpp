#pragma once

// Directional parameterizations of the radiance network input.
//
//   reflection:  d_ref = 2 (d_view . n) n - d_view
//   blend:       alpha = exp(-gamma * detach(|f(x)|)),  gamma = exp(10 gamma_b)
//   hybrid:      d_hyb = normalize(alpha d_ref + (1 - alpha) d_view)
//
// `direction_features` is the single place the configured mode is consumed.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::dirparam {

enum class Mode { Viewing, Reflection, Hybrid };
enum class FusionOrder { PreEncoding, PostEncoding };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);
const char* fusion_name(FusionOrder f);
FusionOrder parse_fusion(const std::string& s);

struct DirectionalConfig {
  Mode mode = Mode::Hybrid;
  FusionOrder fusion = FusionOrder::PreEncoding;  ///< Hybrid only
  bool detach_sdf_in_alpha = true;                ///< Hybrid only
  double gamma_b_init = 0.3;
  nets::PeConfig direction_pe{2, true};
  /// Uses -d_view inside the reflection formula (the physical "toward camera" reading).
  bool negate_view_in_reflection = false;

  bool uses_gamma_b() const { return mode == Mode::Hybrid; }
};

inline constexpr double kDegenerateNorm = 1e-8;

/// Tape 3-vector; flatland keeps z as the constant 0.
using VarVec = std::array<ad::Var, 3>;

VarVec constant_vec(const Vec3& v);
ad::Var dot(const VarVec& a, const VarVec& b);

/// Plain-double reflection. Throws DomainError for a zero normal.
Vec3 reflect_direction(const Vec3& d_view, const Vec3& n);
/// Tape reflection, differentiable in n. Inputs are renormalized; zero normal throws DomainError.
VarVec reflect_direction(const VarVec& d_view, const VarVec& n);

/// gamma = exp(10 gamma_b)
ad::Var gamma_from(const ad::Var& gamma_b);
double blend_weight(double f, double gamma);
ad::Var blend_weight(const ad::Var& f, const ad::Var& gamma_b, bool detach_sdf);

/// normalize(alpha d_ref + (1 - alpha) d_view); falls back to d_view when the blend vanishes.
Vec3 hybrid_direction(const Vec3& d_view, const Vec3& d_ref, double alpha);
VarVec hybrid_direction(const VarVec& d_view, const VarVec& d_ref, const ad::Var& alpha);

/// Unit normal from an SDF gradient, or nullopt when the gradient norm is below kDegenerateNorm.
std::optional<VarVec> normal_from_gradient(const VarVec& gradient);

struct DirectionStats {
  long degenerate_normals = 0;
  long degenerate_blends = 0;
};

/// Encoded direction input for one sample. `normal` is nullopt for a degenerate
/// normal, in which case the viewing direction is used and counted.
std::vector<ad::Var> direction_features(const DirectionalConfig& cfg, int dim, const Vec3& d_view,
                                        const std::optional<VarVec>& normal, const ad::Var& f,
                                        const ad::Var& gamma_b, DirectionStats* stats = nullptr);

}  // namespace dirsurf::dirparam
