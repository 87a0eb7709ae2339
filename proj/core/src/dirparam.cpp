#include "dirsurf/dirparam.hpp"

#include <cmath>

#include "dirsurf/errors.hpp"

namespace dirsurf::dirparam {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Viewing: return "viewing";
    case Mode::Reflection: return "reflection";
    case Mode::Hybrid: return "hybrid";
  }
  return "hybrid";
}

Mode parse_mode(const std::string& s) {
  if (s == "viewing") return Mode::Viewing;
  if (s == "reflection") return Mode::Reflection;
  if (s == "hybrid") return Mode::Hybrid;
  throw ConfigError("direction.mode", "unknown mode '" + s + "' (expected viewing, reflection or hybrid)");
}

const char* fusion_name(FusionOrder f) { return f == FusionOrder::PreEncoding ? "pre_encoding" : "post_encoding"; }

FusionOrder parse_fusion(const std::string& s) {
  if (s == "pre_encoding" || s == "pre") return FusionOrder::PreEncoding;
  if (s == "post_encoding" || s == "post") return FusionOrder::PostEncoding;
  throw ConfigError("direction.fusion", "unknown fusion order '" + s + "' (expected pre_encoding or post_encoding)");
}

VarVec constant_vec(const Vec3& v) { return {ad::Var(v.x()), ad::Var(v.y()), ad::Var(v.z())}; }

ad::Var dot(const VarVec& a, const VarVec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

namespace {
VarVec scale(const ad::Var& s, const VarVec& v) { return {s * v[0], s * v[1], s * v[2]}; }
VarVec add(const VarVec& a, const VarVec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
VarVec sub(const VarVec& a, const VarVec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

/// Squared norm without materialising products of constant zeros.
ad::Var norm_sq(const VarVec& v) {
  ad::Var acc(0.0);
  for (const auto& c : v)
    if (!(c.is_constant() && c.value() == 0.0)) acc = acc + c * c;
  return acc;
}

VarVec normalized(const VarVec& v) {
  const ad::Var nsq = norm_sq(v);
  if (!(nsq.value() > kDegenerateNorm * kDegenerateNorm)) throw DomainError("degenerate normal: zero-norm vector");
  const ad::Var inv = ad::Var(1.0) / ad::sqrt(nsq);
  return scale(inv, v);
}
}  // namespace

Vec3 reflect_direction(const Vec3& d_view, const Vec3& n) {
  const double nn = n.norm();
  if (!(nn > kDegenerateNorm)) throw DomainError("degenerate normal: zero-norm normal in reflection");
  const Vec3 nu = n / nn;
  const Vec3 d = d_view.normalized();
  return (2.0 * d.dot(nu) * nu - d).normalized();
}

VarVec reflect_direction(const VarVec& d_view, const VarVec& n) {
  const VarVec nu = normalized(n);
  const VarVec d = normalized(d_view);
  const ad::Var two_dn = ad::Var(2.0) * dot(d, nu);
  return sub(scale(two_dn, nu), d);
}

ad::Var gamma_from(const ad::Var& gamma_b) { return ad::exp(ad::Var(10.0) * gamma_b); }

double blend_weight(double f, double gamma) { return std::exp(-gamma * std::fabs(f)); }

ad::Var blend_weight(const ad::Var& f, const ad::Var& gamma_b, bool detach_sdf) {
  const ad::Var dist = detach_sdf ? ad::detach(ad::abs(f)) : ad::abs(f);
  return ad::exp(-(gamma_from(gamma_b) * dist));
}

Vec3 hybrid_direction(const Vec3& d_view, const Vec3& d_ref, double alpha) {
  const Vec3 blend = alpha * d_ref + (1.0 - alpha) * d_view;
  if (alpha == 0.0 || alpha == 1.0) return blend;
  const double n = blend.norm();
  if (n < kDegenerateNorm) return d_view;
  return blend / n;
}

namespace {
VarVec hybrid_checked(const VarVec& d_view, const VarVec& d_ref, const ad::Var& alpha, bool* degenerate) {
  const VarVec blend = add(scale(alpha, d_ref), scale(ad::Var(1.0) - alpha, d_view));
  // At the end points the blend is one of the unit inputs already.
  if (alpha.value() == 0.0 || alpha.value() == 1.0) return blend;
  const ad::Var nsq = norm_sq(blend);
  if (!(nsq.value() >= kDegenerateNorm * kDegenerateNorm)) {
    if (degenerate) *degenerate = true;
    return d_view;
  }
  return scale(ad::Var(1.0) / ad::sqrt(nsq), blend);
}
}  // namespace

VarVec hybrid_direction(const VarVec& d_view, const VarVec& d_ref, const ad::Var& alpha) {
  return hybrid_checked(d_view, d_ref, alpha, nullptr);
}

std::optional<VarVec> normal_from_gradient(const VarVec& gradient) {
  const ad::Var nsq = norm_sq(gradient);
  if (!(nsq.value() >= kDegenerateNorm * kDegenerateNorm)) return std::nullopt;
  return scale(ad::Var(1.0) / ad::sqrt(nsq), gradient);
}

std::vector<ad::Var> direction_features(const DirectionalConfig& cfg, int dim, const Vec3& d_view,
                                        const std::optional<VarVec>& normal, const ad::Var& f,
                                        const ad::Var& gamma_b, DirectionStats* stats) {
  auto encode = [&](const VarVec& d) {
    return nets::pe_encode(std::span<const ad::Var>(d.data(), static_cast<std::size_t>(dim)), cfg.direction_pe);
  };
  const VarVec view = constant_vec(d_view);
  if (cfg.mode == Mode::Viewing) return encode(view);
  if (!normal) {
    if (stats) ++stats->degenerate_normals;
    return encode(view);
  }
  const VarVec ref = reflect_direction(cfg.negate_view_in_reflection ? constant_vec(-d_view) : view, *normal);
  if (cfg.mode == Mode::Reflection) return encode(ref);

  const ad::Var alpha = blend_weight(f, gamma_b, cfg.detach_sdf_in_alpha);
  // Saturated weights select one input outright so the limits match the other
  // modes bit for bit (no alpha-scaled copy taking a different libm path).
  // d(alpha)/d(anything) vanishes there up to |f| * gamma < 1 ulp.
  if (alpha.value() == 1.0) return encode(ref);
  if (alpha.value() == 0.0) return encode(view);
  if (cfg.fusion == FusionOrder::PreEncoding) {
    bool degenerate = false;
    const VarVec hyb = hybrid_checked(view, ref, alpha, &degenerate);
    if (stats && degenerate) ++stats->degenerate_blends;
    return encode(hyb);
  }
  const auto pe_ref = encode(ref);
  const auto pe_view = encode(view);
  std::vector<ad::Var> out(pe_ref.size());
  const ad::Var beta = ad::Var(1.0) - alpha;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * pe_ref[i] + beta * pe_view[i];
  return out;
}

}  // namespace dirsurf::dirparam
