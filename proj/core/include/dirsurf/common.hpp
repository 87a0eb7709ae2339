#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace dirsurf {

/// Points and directions are stored in 3-vectors; flatland (2D) leaves z = 0.
using Vec3 = Eigen::Vector3d;
using Rgb = Eigen::Vector3d;
using Rng = std::mt19937_64;

/// Seed for a named sub-stream ("dataset", "init", "sampling", ...) of a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers write results to index-owned slots so the
/// output never depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace dirsurf
