#pragma once

// Forward-mode spatial tangents layered over the reverse tape.
//
// A SpatialDual carries a primal value and its partial derivatives with respect
// to the D input coordinates. The tangents are themselves tape values, so any
// quantity built from them (normals, the eikonal residual) can be
// differentiated again with respect to parameters in the reverse sweep.

#include <array>

#include "dirsurf/errors.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::ad {

inline constexpr int kMaxSpatialDim = 3;

struct SpatialDual {
  Var primal;
  std::array<Var, kMaxSpatialDim> tangent{};
  int dim = 0;

  /// Constant field (zero tangent).
  static SpatialDual constant(const Var& v, int dim) {
    SpatialDual d;
    d.primal = v;
    d.dim = dim;
    return d;
  }
  /// The i-th input coordinate: tangent is the i-th standard basis vector.
  static SpatialDual coordinate(const Var& v, int i, int dim) {
    if (i < 0 || i >= dim || dim > kMaxSpatialDim) throw UsageError("SpatialDual::coordinate: bad axis");
    SpatialDual d = constant(v, dim);
    d.tangent[static_cast<std::size_t>(i)] = Var(1.0);
    return d;
  }
  double value() const { return primal.value(); }
};

namespace detail {
inline int common_dim(const SpatialDual& a, const SpatialDual& b) {
  if (a.dim != b.dim) throw UsageError("SpatialDual dimension mismatch");
  return a.dim;
}
/// Chain rule for y = g(x): tangent_y = g'(x) * tangent_x.
inline SpatialDual chain(const Var& y, const Var& dy_dx, const SpatialDual& x) {
  SpatialDual r = SpatialDual::constant(y, x.dim);
  for (int i = 0; i < x.dim; ++i) r.tangent[i] = dy_dx * x.tangent[i];
  return r;
}
}  // namespace detail

inline SpatialDual operator+(const SpatialDual& a, const SpatialDual& b) {
  const int d = detail::common_dim(a, b);
  SpatialDual r = SpatialDual::constant(a.primal + b.primal, d);
  for (int i = 0; i < d; ++i) r.tangent[i] = a.tangent[i] + b.tangent[i];
  return r;
}
inline SpatialDual operator-(const SpatialDual& a, const SpatialDual& b) {
  const int d = detail::common_dim(a, b);
  SpatialDual r = SpatialDual::constant(a.primal - b.primal, d);
  for (int i = 0; i < d; ++i) r.tangent[i] = a.tangent[i] - b.tangent[i];
  return r;
}
inline SpatialDual operator*(const SpatialDual& a, const SpatialDual& b) {
  const int d = detail::common_dim(a, b);
  SpatialDual r = SpatialDual::constant(a.primal * b.primal, d);
  for (int i = 0; i < d; ++i) r.tangent[i] = a.tangent[i] * b.primal + a.primal * b.tangent[i];
  return r;
}
inline SpatialDual operator/(const SpatialDual& a, const SpatialDual& b) {
  const int d = detail::common_dim(a, b);
  const Var q = a.primal / b.primal;
  SpatialDual r = SpatialDual::constant(q, d);
  for (int i = 0; i < d; ++i) r.tangent[i] = (a.tangent[i] - q * b.tangent[i]) / b.primal;
  return r;
}
inline SpatialDual operator-(const SpatialDual& a) { return detail::chain(-a.primal, Var(-1.0), a); }

/// Scaling by a tape scalar that does not depend on the input coordinates (a weight).
inline SpatialDual operator*(const Var& w, const SpatialDual& a) {
  SpatialDual r = SpatialDual::constant(w * a.primal, a.dim);
  for (int i = 0; i < a.dim; ++i) r.tangent[i] = w * a.tangent[i];
  return r;
}
inline SpatialDual operator+(const SpatialDual& a, const Var& c) {
  SpatialDual r = a;
  r.primal = a.primal + c;
  return r;
}

inline SpatialDual exp(const SpatialDual& a) {
  const Var e = exp(a.primal);
  return detail::chain(e, e, a);
}
inline SpatialDual log(const SpatialDual& a) { return detail::chain(log(a.primal), Var(1.0) / a.primal, a); }
inline SpatialDual sqrt(const SpatialDual& a) {
  const Var r = sqrt(a.primal);
  return detail::chain(r, Var(0.5) / r, a);
}
inline SpatialDual sin(const SpatialDual& a) { return detail::chain(sin(a.primal), cos(a.primal), a); }
inline SpatialDual cos(const SpatialDual& a) { return detail::chain(cos(a.primal), -sin(a.primal), a); }
inline SpatialDual tanh(const SpatialDual& a) {
  const Var t = tanh(a.primal);
  return detail::chain(t, Var(1.0) - t * t, a);
}
inline SpatialDual sigmoid(const SpatialDual& a) {
  const Var s = sigmoid(a.primal);
  return detail::chain(s, s * (Var(1.0) - s), a);
}
/// softplus with sharpness beta: log(1 + e^{beta a}) / beta.
inline SpatialDual softplus(const SpatialDual& a, double beta = 1.0) {
  const Var y = softplus(Var(beta) * a.primal) / Var(beta);
  return detail::chain(y, sigmoid(Var(beta) * a.primal), a);
}
inline SpatialDual relu(const SpatialDual& a) {
  return detail::chain(relu(a.primal), Var(a.value() > 0.0 ? 1.0 : 0.0), a);
}
inline SpatialDual abs(const SpatialDual& a) {
  const double s = a.value() > 0.0 ? 1.0 : (a.value() < 0.0 ? -1.0 : 0.0);
  return detail::chain(abs(a.primal), Var(s), a);
}

}  // namespace dirsurf::ad
