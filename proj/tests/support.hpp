#pragma once

// Shared helpers for the test executables: tolerance checks, finite
// differences and a random expression generator usable with double, Var and
// SpatialDual.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dirsurf/common.hpp"
#include "dirsurf/spatial_dual.hpp"
#include "dirsurf/tape.hpp"

namespace dirsurf::testing {

/// |a - b| within `rel` of the larger magnitude, or below the absolute floor.
inline bool close(double a, double b, double rel, double abs_floor = 1e-6) {
  const double d = std::fabs(a - b);
  return d <= abs_floor || d <= rel * std::max(std::fabs(a), std::fabs(b));
}

inline double rel_error(double a, double b, double abs_floor = 1e-6) {
  const double d = std::fabs(a - b);
  if (d <= abs_floor) return 0.0;
  return d / std::max(std::fabs(a), std::fabs(b));
}

/// Central difference of f with respect to x (x is restored).
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

inline Vec3 random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v = Vec3::Zero();
  do {
    for (int i = 0; i < dim; ++i) v[i] = n(rng);
  } while (v.norm() < 1e-3);
  return v.normalized();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Random smooth expression DAG over a few inputs. Every operation keeps its
/// argument inside the domain of log/sqrt/div, and products go through tanh
/// so magnitudes stay bounded.
struct ExprProgram {
  struct Op {
    int kind;
    int a;
    int b;
  };
  int inputs = 0;
  std::vector<Op> ops;
  static constexpr int kKinds = 12;

  static ExprProgram random(Rng& rng, int inputs, int n_ops) {
    ExprProgram p;
    p.inputs = inputs;
    for (int i = 0; i < n_ops; ++i) {
      const int avail = inputs + i;
      std::uniform_int_distribution<int> pick(std::max(0, avail - 24), avail - 1);
      std::uniform_int_distribution<int> kind(0, kKinds - 1);
      p.ops.push_back({kind(rng), pick(rng), pick(rng)});
    }
    return p;
  }

  template <typename T, typename MakeConst>
  T run(std::vector<T> v, MakeConst c) const {
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    using std::tanh;
    for (const auto& op : ops) {
      const T& a = v[static_cast<std::size_t>(op.a)];
      const T& b = v[static_cast<std::size_t>(op.b)];
      switch (op.kind) {
        case 0: v.push_back(a + b); break;
        case 1: v.push_back(a - b); break;
        case 2: v.push_back(a * tanh(b)); break;
        case 3: v.push_back(a / (c(1.0) + b * b)); break;
        case 4: v.push_back(exp(tanh(a))); break;
        case 5: v.push_back(log(c(1.0) + a * a)); break;
        case 6: v.push_back(sqrt(c(1.0) + a * a)); break;
        case 7: v.push_back(sin(a)); break;
        case 8: v.push_back(cos(a)); break;
        case 9: v.push_back(tanh(a)); break;
        case 10: v.push_back(sigmoid(a)); break;
        default: v.push_back(softplus(a)); break;
      }
    }
    T out = c(0.0);
    const std::size_t n = v.size();
    for (std::size_t i = n - std::min<std::size_t>(5, n); i < n; ++i) out = out + v[i];
    return out;
  }
};

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dirsurf_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace dirsurf::testing
