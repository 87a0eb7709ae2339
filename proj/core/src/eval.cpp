#include "dirsurf/eval.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <limits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "dirsurf/dirparam.hpp"
#include "dirsurf/errors.hpp"
#include "mc_tables.hpp"

namespace dirsurf::eval {

Bounds cube_bounds(int dim, double half) {
  Bounds b;
  b.dim = dim;
  b.lo = Vec3(-half, -half, dim == 3 ? -half : 0.0);
  b.hi = Vec3(half, half, dim == 3 ? half : 0.0);
  return b;
}

BatchSdf analytic_oracle(const scenes::AnalyticSdf& sdf) {
  return [sdf](const Eigen::MatrixXd& pts) {
    Eigen::VectorXd f(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      Vec3 p = Vec3::Zero();
      p.head(pts.rows()) = pts.col(i);
      f[i] = sdf.value(p);
    }
    return f;
  };
}

BatchSdf network_oracle(const nets::FieldBundle& bundle) {
  return [&bundle](const Eigen::MatrixXd& pts) { return nets::sdf_values(bundle, pts); };
}

namespace {

Vec3 lattice_point(const Bounds& b, int res, int i, int j, int k) {
  const Vec3 step = (b.hi - b.lo) / res;
  return Vec3(b.lo.x() + i * step.x(), b.lo.y() + j * step.y(), b.dim == 3 ? b.lo.z() + k * step.z() : 0.0);
}

double cross2(const Vec3& a, const Vec3& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Welds extracted vertices: edge crossings by edge key, crossings that land on a lattice point by that point.
class VertexWelder {
 public:
  VertexWelder(std::vector<Vec3>& out, std::int64_t corner_offset) : out_(out), corner_offset_(corner_offset) {}

  /// Crossing on the lattice edge from corner a to corner b (a has the lower index).
  int crossing(std::int64_t edge_key, std::int64_t a, std::int64_t b, const Vec3& pa, const Vec3& pb, double fa,
               double fb) {
    const double t = fa / (fa - fb);
    if (t <= 0.0) return corner(a, pa);
    if (t >= 1.0) return corner(b, pb);
    return lookup(edge_key, pa + t * (pb - pa));
  }

 private:
  int corner(std::int64_t idx, const Vec3& p) { return lookup(corner_offset_ + idx, p); }
  int lookup(std::int64_t key, const Vec3& p) {
    auto [it, fresh] = map_.try_emplace(key, static_cast<int>(out_.size()));
    if (fresh) out_.push_back(p);
    return it->second;
  }

  std::vector<Vec3>& out_;
  std::int64_t corner_offset_;
  std::unordered_map<std::int64_t, int> map_;
};

}  // namespace

Eigen::VectorXd sample_grid(const BatchSdf& f, const Bounds& b, int resolution, int workers) {
  if (resolution < 2) throw UsageError("extraction resolution must be at least 2");
  const std::int64_t n = resolution + 1;
  const std::int64_t total = b.dim == 3 ? n * n * n : n * n;
  Eigen::VectorXd values(total);
  constexpr std::int64_t kChunk = 8192;
  const auto chunks = static_cast<std::size_t>((total + kChunk - 1) / kChunk);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::int64_t start = static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t len = std::min(kChunk, total - start);
    Eigen::MatrixXd pts(b.dim, len);
    for (std::int64_t q = 0; q < len; ++q) {
      const std::int64_t idx = start + q;
      const int i = static_cast<int>(idx % n);
      const int j = static_cast<int>((idx / n) % n);
      const int k = static_cast<int>(idx / (n * n));
      pts.col(q) = lattice_point(b, resolution, i, j, k).head(b.dim);
    }
    const Eigen::VectorXd v = f(pts);
    if (v.size() != len) throw UsageError("field oracle returned the wrong number of values");
    values.segment(start, len) = v;
  });
  return values;
}

// ---------------------------------------------------------------------------
// Marching squares

Polylines marching_squares(const BatchSdf& f, const Bounds& b, int resolution, int workers) {
  if (b.dim != 2) throw UsageError("marching_squares needs 2D bounds");
  const Eigen::VectorXd g = sample_grid(f, b, resolution, workers);
  const int n = resolution + 1;
  auto lin = [n](int i, int j) { return static_cast<std::int64_t>(j) * n + i; };
  auto val = [&](int i, int j) { return g[lin(i, j)]; };
  auto inside = [&](int i, int j) { return val(i, j) < 0.0; };

  // Cell corners c0..c3 counter-clockwise from (i, j); edge e_k joins c_k and c_{k+1}.
  const int ci[4] = {0, 1, 1, 0};
  const int cj[4] = {0, 0, 1, 1};

  // The center sample only matters for the two saddle cases.
  std::vector<std::pair<int, int>> saddles;
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      int c = 0;
      for (int k = 0; k < 4; ++k) c |= inside(i + ci[k], j + cj[k]) ? 1 << k : 0;
      if (c == 5 || c == 10) saddles.emplace_back(i, j);
    }
  }
  std::unordered_map<std::int64_t, bool> center_inside;
  if (!saddles.empty()) {
    Eigen::MatrixXd pts(2, static_cast<Eigen::Index>(saddles.size()));
    const Vec3 step = (b.hi - b.lo) / resolution;
    for (std::size_t s = 0; s < saddles.size(); ++s) {
      const Vec3 p = lattice_point(b, resolution, saddles[s].first, saddles[s].second, 0) + 0.5 * step;
      pts.col(static_cast<Eigen::Index>(s)) = p.head(2);
    }
    const Eigen::VectorXd fc = f(pts);
    for (std::size_t s = 0; s < saddles.size(); ++s)
      center_inside[lin(saddles[s].first, saddles[s].second)] = fc[static_cast<Eigen::Index>(s)] < 0.0;
  }

  Polylines out;
  out.resolution = resolution;
  const std::int64_t lattice = static_cast<std::int64_t>(n) * n;
  VertexWelder weld(out.vertices, 2 * lattice);

  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      int c = 0;
      std::array<bool, 4> in{};
      std::array<Vec3, 4> pos;
      std::array<std::int64_t, 4> idx{};
      for (int k = 0; k < 4; ++k) {
        in[k] = inside(i + ci[k], j + cj[k]);
        c |= in[k] ? 1 << k : 0;
        pos[k] = lattice_point(b, resolution, i + ci[k], j + cj[k], 0);
        idx[k] = lin(i + ci[k], j + cj[k]);
      }
      if (c == 0 || c == 15) continue;

      auto edge_vertex = [&](int e) {
        const int a = e;
        const int bb = (e + 1) % 4;
        // Canonical direction: lower lattice index first, so shared edges weld exactly.
        const int lo = idx[a] < idx[bb] ? a : bb;
        const int hi = lo == a ? bb : a;
        const bool horizontal = e == 0 || e == 2;
        const std::int64_t key = 2 * idx[lo] + (horizontal ? 0 : 1);
        return weld.crossing(key, idx[lo], idx[hi], pos[lo], pos[hi], g[idx[lo]], g[idx[hi]]);
      };

      std::vector<std::array<int, 2>> pairs;
      if (c == 5 || c == 10) {
        const bool center_in = center_inside.at(lin(i, j));
        // Joined through the center: cut off the corners of the other sign.
        const bool cut_odd = (c == 5) == center_in;  // isolate c1 and c3
        if (cut_odd) pairs = {{0, 1}, {2, 3}};
        else pairs = {{3, 0}, {1, 2}};
      } else {
        std::vector<int> crossing;
        for (int e = 0; e < 4; ++e)
          if (in[e] != in[(e + 1) % 4]) crossing.push_back(e);
        pairs = {{crossing[0], crossing[1]}};
      }

      for (const auto& [ea, eb] : pairs) {
        int va = edge_vertex(ea);
        int vb = edge_vertex(eb);
        if (va == vb) continue;
        const Vec3& p = out.vertices[static_cast<std::size_t>(va)];
        const Vec3& q = out.vertices[static_cast<std::size_t>(vb)];
        if ((q - p).norm() <= 1e-12) continue;
        Vec3 ref;
        bool ref_in;
        if ((eb - ea + 4) % 4 == 2) {
          // Opposite edges: both corners on one side share their sign.
          const int k0 = ea == 0 || ea == 2 ? 3 : 0;
          const int k1 = (k0 + 1) % 4;
          ref = 0.5 * (pos[k0] + pos[k1]);
          ref_in = in[k0];
        } else {
          const int shared = (ea + 1) % 4 == eb ? eb : ea;
          ref = pos[shared];
          ref_in = in[shared];
        }
        const double side = cross2(q - p, ref - p);
        if ((ref_in && side < 0.0) || (!ref_in && side > 0.0)) std::swap(va, vb);
        out.segments.push_back({va, vb});
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> Polylines::chains() const {
  std::unordered_map<int, std::vector<int>> outgoing;
  std::unordered_map<int, int> indegree;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    outgoing[segments[s][0]].push_back(static_cast<int>(s));
    ++indegree[segments[s][1]];
  }
  std::vector<bool> used(segments.size(), false);
  std::vector<std::vector<int>> out;
  auto walk = [&](std::size_t s0) {
    std::vector<int> chain{segments[s0][0]};
    std::size_t s = s0;
    while (true) {
      used[s] = true;
      const int head = segments[s][1];
      chain.push_back(head);
      auto it = outgoing.find(head);
      if (it == outgoing.end()) break;
      std::size_t next = segments.size();
      for (int cand : it->second)
        if (!used[static_cast<std::size_t>(cand)]) {
          next = static_cast<std::size_t>(cand);
          break;
        }
      if (next == segments.size()) break;
      s = next;
    }
    out.push_back(std::move(chain));
  };
  // Open chains first (start at a vertex nothing flows into), then the loops.
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s] && indegree[segments[s][0]] == 0) walk(s);
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) walk(s);
  return out;
}

double Polylines::length() const {
  double l = 0.0;
  for (const auto& s : segments)
    l += (vertices[static_cast<std::size_t>(s[1])] - vertices[static_cast<std::size_t>(s[0])]).norm();
  return l;
}

// ---------------------------------------------------------------------------
// Marching cubes

Mesh marching_cubes(const BatchSdf& f, const Bounds& b, int resolution, int workers) {
  if (b.dim != 3) throw UsageError("marching_cubes needs 3D bounds");
  const Eigen::VectorXd g = sample_grid(f, b, resolution, workers);
  const std::int64_t n = resolution + 1;
  auto lin = [n](std::int64_t i, std::int64_t j, std::int64_t k) { return (k * n + j) * n + i; };

  static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  static constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                       {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

  Mesh mesh;
  mesh.resolution = resolution;
  VertexWelder weld(mesh.vertices, 3 * n * n * n);

  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        std::array<std::int64_t, 8> idx{};
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          idx[c] = lin(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (g[idx[c]] < 0.0) cube |= 1 << c;
        }
        const int edges = detail::kMcEdgeTable[cube];
        if (edges == 0) continue;
        std::array<int, 12> vert{};
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          int a = kEdge[e][0];
          int c = kEdge[e][1];
          if (idx[a] > idx[c]) std::swap(a, c);
          int axis = 0;
          while (kCorner[a][axis] == kCorner[c][axis]) ++axis;
          const Vec3 pa = lattice_point(b, resolution, i + kCorner[a][0], j + kCorner[a][1], k + kCorner[a][2]);
          const Vec3 pc = lattice_point(b, resolution, i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          vert[e] = weld.crossing(3 * idx[a] + axis, idx[a], idx[c], pa, pc, g[idx[a]], g[idx[c]]);
        }
        const int* tri = detail::kMcTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          // The table winds faces clockwise seen from outside; store them counter-clockwise.
          const std::array<int, 3> face{vert[tri[t]], vert[tri[t + 2]], vert[tri[t + 1]]};
          const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(face[0])];
          const Vec3& p1 = mesh.vertices[static_cast<std::size_t>(face[1])];
          const Vec3& p2 = mesh.vertices[static_cast<std::size_t>(face[2])];
          if (0.5 * (p1 - p0).cross(p2 - p0).norm() <= 1e-12) continue;
          mesh.faces.push_back(face);
        }
      }
    }
  }
  return mesh;
}

double Mesh::area() const {
  double a = 0.0;
  for (const auto& f : faces) {
    const Vec3& p0 = vertices[static_cast<std::size_t>(f[0])];
    a += 0.5 * (vertices[static_cast<std::size_t>(f[1])] - p0).cross(vertices[static_cast<std::size_t>(f[2])] - p0).norm();
  }
  return a;
}

// ---------------------------------------------------------------------------
// Surface sampling

std::vector<Vec3> sample_polylines(const Polylines& p, int n, std::uint64_t seed) {
  if (p.segments.empty() || n <= 0) return {};
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& s : p.segments) {
    total += (p.vertices[static_cast<std::size_t>(s[1])] - p.vertices[static_cast<std::size_t>(s[0])]).norm();
    cum.push_back(total);
  }
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng) * total;
    const auto s = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(), static_cast<std::ptrdiff_t>(cum.size() - 1)));
    const Vec3& a = p.vertices[static_cast<std::size_t>(p.segments[s][0])];
    const Vec3& b = p.vertices[static_cast<std::size_t>(p.segments[s][1])];
    out.push_back(a + uniform01(rng) * (b - a));
  }
  return out;
}

std::vector<Vec3> sample_mesh(const Mesh& m, int n, std::uint64_t seed) {
  if (m.faces.empty() || n <= 0) return {};
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& f : m.faces) {
    const Vec3& p0 = m.vertices[static_cast<std::size_t>(f[0])];
    total += 0.5 * (m.vertices[static_cast<std::size_t>(f[1])] - p0).cross(m.vertices[static_cast<std::size_t>(f[2])] - p0).norm();
    cum.push_back(total);
  }
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng) * total;
    const auto fi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(), static_cast<std::ptrdiff_t>(cum.size() - 1)));
    const auto& f = m.faces[fi];
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    out.push_back((1.0 - r1) * m.vertices[static_cast<std::size_t>(f[0])] +
                  r1 * (1.0 - r2) * m.vertices[static_cast<std::size_t>(f[1])] +
                  r1 * r2 * m.vertices[static_cast<std::size_t>(f[2])]);
  }
  return out;
}

std::vector<Vec3> sample_analytic_surface(const scenes::AnalyticSdf& sdf, const Bounds& b, int n, std::uint64_t seed) {
  constexpr double kBand = 0.01;
  constexpr double kAccept = 1e-4;
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  const std::int64_t max_draws = 20000LL * std::max(n, 1) + 1000000;
  for (std::int64_t draw = 0; static_cast<int>(out.size()) < n; ++draw) {
    if (draw >= max_draws) throw UsageError("sample_analytic_surface: the zero level set is empty or too small");
    Vec3 x = Vec3::Zero();
    for (int d = 0; d < b.dim; ++d) x[d] = b.lo[d] + uniform01(rng) * (b.hi[d] - b.lo[d]);
    auto s = sdf.eval(x);
    if (std::fabs(s.f) >= kBand) continue;
    for (int it = 0; it < 5; ++it) {
      const double g2 = s.gradient.squaredNorm();
      if (g2 == 0.0) break;
      x -= s.f * s.gradient / g2;
      if (b.dim == 2) x.z() = 0.0;
      s = sdf.eval(x);
    }
    if (std::fabs(s.f) < kAccept) out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest neighbours and metrics

PointIndex::PointIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw UsageError("PointIndex: empty point set");
  Vec3 lo = points_.front();
  Vec3 hi = lo;
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 ext = hi - lo;
  double volume = 1.0;
  int k = 0;
  for (int a = 0; a < 3; ++a)
    if (ext[a] > 0.0) {
      volume *= ext[a];
      ++k;
    }
  const double count = static_cast<double>(points_.size());
  cell_ = k == 0 ? 1.0 : std::pow(volume / count, 1.0 / k) * 1.5;
  if (!(cell_ > 0.0)) cell_ = 1.0;
  for (int a = 0; a < 3; ++a) {
    // Thin extents in an otherwise large set would starve the grid; floor the cell.
    if (ext[a] > 0.0) cell_ = std::max(cell_, ext[a] / 4096.0);
  }
  origin_ = lo;
  for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::floor(ext[a] / cell_)) + 1);

  const std::size_t cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  std::vector<int> counts(cells + 1, 0);
  std::vector<std::size_t> cell_of_point(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = cell_of(points_[i]);
    cell_of_point[i] = (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    ++counts[cell_of_point[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) counts[c + 1] += counts[c];
  start_ = counts;
  order_.assign(points_.size(), 0);
  std::vector<int> fill(counts.begin(), counts.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[static_cast<std::size_t>(fill[cell_of_point[i]]++)] = static_cast<int>(i);
}

std::array<int, 3> PointIndex::cell_of(const Vec3& p) const {
  std::array<int, 3> c{};
  for (int a = 0; a < 3; ++a)
    c[a] = std::clamp(static_cast<int>(std::floor((p[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
  return c;
}

double PointIndex::nearest_distance(const Vec3& q) const {
  const auto c = cell_of(q);
  double best2 = std::numeric_limits<double>::infinity();
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  for (int r = 0; r <= max_ring; ++r) {
    const int lo[3] = {std::max(c[0] - r, 0), std::max(c[1] - r, 0), std::max(c[2] - r, 0)};
    const int hi[3] = {std::min(c[0] + r, dims_[0] - 1), std::min(c[1] + r, dims_[1] - 1), std::min(c[2] + r, dims_[2] - 1)};
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const int cheb = std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])});
          if (cheb != r) continue;
          const std::size_t cell = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
          for (int s = start_[cell]; s < start_[cell + 1]; ++s)
            best2 = std::min(best2, (points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(s)])] - q).squaredNorm());
        }
    // Every point not yet visited lies outside the box of rings 0..r.
    double bound = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (dims_[a] == 1) continue;
      if (c[a] - r > 0) bound = std::min(bound, q[a] - (origin_[a] + (c[a] - r) * cell_));
      if (c[a] + r < dims_[a] - 1) bound = std::min(bound, origin_[a] + (c[a] + r + 1) * cell_ - q[a]);
    }
    if (std::isinf(bound)) break;  // the whole grid has been visited
    if (bound > 0.0 && best2 <= bound * bound) break;
  }
  return std::sqrt(best2);
}

double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.empty() || to.empty()) throw UsageError("point-set metric on an empty set");
  const PointIndex index(to);
  double sum = 0.0;
  for (const auto& p : from) sum += index.nearest_distance(p);
  return sum / static_cast<double>(from.size());
}

double chamfer_distance(std::span<const Vec3> p, std::span<const Vec3> q) {
  return 0.5 * (mean_nearest_distance(p, q) + mean_nearest_distance(q, p));
}

double accuracy(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth) {
  return mean_nearest_distance(predicted, ground_truth);
}

double hausdorff_distance(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.empty() || q.empty()) throw UsageError("point-set metric on an empty set");
  const PointIndex ip(p);
  const PointIndex iq(q);
  double h = 0.0;
  for (const auto& x : p) h = std::max(h, iq.nearest_distance(x));
  for (const auto& x : q) h = std::max(h, ip.nearest_distance(x));
  return h;
}

double normal_mae(const io::Image& predicted, const io::Image& ground_truth, const io::Image& mask) {
  if (predicted.width != ground_truth.width || predicted.height != ground_truth.height || predicted.channels != 3 ||
      ground_truth.channels != 3 || mask.width != predicted.width || mask.height != predicted.height)
    throw UsageError("normal_mae: image dimensions differ");
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < predicted.height; ++y) {
    for (int x = 0; x < predicted.width; ++x) {
      if (!(mask.at(x, y, 0) > 0.5)) continue;
      const Vec3 a(predicted.at(x, y, 0), predicted.at(x, y, 1), predicted.at(x, y, 2));
      const Vec3 b(ground_truth.at(x, y, 0), ground_truth.at(x, y, 1), ground_truth.at(x, y, 2));
      double angle = 90.0;
      if (a.norm() > 0.0 && b.norm() > 0.0)
        angle = std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
      sum += angle;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double winding_number(const Polylines& p, const Vec3& point) {
  double total = 0.0;
  for (const auto& s : p.segments) {
    const Vec3 a = p.vertices[static_cast<std::size_t>(s[0])] - point;
    const Vec3 b = p.vertices[static_cast<std::size_t>(s[1])] - point;
    total += std::atan2(cross2(a, b), a.x() * b.x() + a.y() * b.y());
  }
  return total / (2.0 * std::numbers::pi);
}

bool contains(const Polylines& p, const Vec3& point) { return winding_number(p, point) > 0.5; }

// ---------------------------------------------------------------------------
// Dispersion diagnostic

double circular_spread(std::span<const Vec3> unit_vectors) {
  if (unit_vectors.size() < 2) return 0.0;
  // For unit vectors 1 - R^2 equals the mean squared deviation from the mean.
  // Accumulating offsets from the first vector keeps identical inputs at exactly 0.
  const Vec3 ref = unit_vectors.front();
  Vec3 delta = Vec3::Zero();
  double sq = 0.0;
  for (const auto& v : unit_vectors) {
    delta += v - ref;
    sq += (v - ref).squaredNorm();
  }
  const double n = static_cast<double>(unit_vectors.size());
  delta /= n;
  const double var = std::max(sq / n - delta.squaredNorm(), 0.0);
  if (var == 0.0) return 0.0;
  if (var >= 1.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(-std::log1p(-var));
}

DispersionProfile reflection_dispersion(const scenes::AnalyticSdf& sdf, const scenes::Ray& ray,
                                        std::span<const double> t) {
  DispersionProfile prof;
  const Vec3 d = ray.direction.normalized();
  if (const auto hit = scenes::sphere_trace(sdf, ray)) {
    prof.hit = true;
    prof.hit_normal = hit->normal;
  }
  std::array<std::vector<Vec3>, 3> per_band;
  for (double ti : t) {
    const Vec3 x = ray.origin + ti * d;
    const auto s = sdf.eval(x);
    if (!(s.gradient.norm() > dirparam::kDegenerateNorm)) continue;
    const Vec3 n = s.gradient.normalized();
    const Vec3 r = dirparam::reflect_direction(d, n);
    prof.t.push_back(ti);
    prof.f.push_back(s.f);
    prof.reflection.push_back(r);
    const double af = std::fabs(s.f);
    for (std::size_t band = 0; band < 3; ++band)
      if (af >= kDispersionBandEdges[band] && af < kDispersionBandEdges[band + 1]) per_band[band].push_back(r);
    if (prof.hit)
      prof.normal_deviation_deg.push_back(std::acos(std::clamp(n.dot(prof.hit_normal), -1.0, 1.0)) * 180.0 /
                                          std::numbers::pi);
  }
  for (std::size_t band = 0; band < 3; ++band) {
    prof.bands[band].lo = kDispersionBandEdges[band];
    prof.bands[band].hi = kDispersionBandEdges[band + 1];
    prof.bands[band].samples = static_cast<int>(per_band[band].size());
    prof.bands[band].spread_rad = circular_spread(per_band[band]);
  }
  return prof;
}

FanDispersion fan_dispersion(const scenes::AnalyticSdf& sdf, std::span<const scenes::Ray> rays, int samples_per_ray) {
  if (samples_per_ray < 2) throw UsageError("fan_dispersion: need at least two samples per ray");
  FanDispersion out;
  for (const auto& ray : rays) {
    std::vector<double> t(static_cast<std::size_t>(samples_per_ray));
    for (int i = 0; i < samples_per_ray; ++i)
      t[static_cast<std::size_t>(i)] = ray.near + (i + 0.5) / samples_per_ray * (ray.far - ray.near);
    out.rays.push_back(reflection_dispersion(sdf, ray, t));
    for (std::size_t b = 0; b < 3; ++b) {
      if (out.rays.back().bands[b].samples == 0) continue;
      out.mean_spread[b] += out.rays.back().bands[b].spread_rad;
      ++out.rays_in_band[b];
    }
  }
  for (std::size_t b = 0; b < 3; ++b)
    if (out.rays_in_band[b] > 0) out.mean_spread[b] /= out.rays_in_band[b];
  return out;
}

std::vector<scenes::Ray> ray_fan(int dim, const Vec3& origin, const Vec3& target, double half_angle_deg, int n,
                                 double bound_radius) {
  if (n < 1) throw UsageError("ray_fan: need at least one ray");
  const Vec3 d0 = (target - origin).normalized();
  Vec3 axis = dim == 2 ? Vec3::UnitZ() : d0.cross(Vec3::UnitZ());
  if (axis.norm() < 1e-9) axis = Vec3::UnitX();
  axis.normalize();
  std::vector<scenes::Ray> rays;
  for (int k = 0; k < n; ++k) {
    const double a = n == 1 ? 0.0 : (-half_angle_deg + 2.0 * half_angle_deg * k / (n - 1)) * std::numbers::pi / 180.0;
    scenes::Ray r;
    r.origin = origin;
    r.direction = Eigen::AngleAxisd(a, axis) * d0;
    const double b = origin.dot(r.direction);
    const double c = origin.squaredNorm() - bound_radius * bound_radius;
    const double disc = b * b - c;
    if (disc > 0.0) {
      r.near = std::max(-b - std::sqrt(disc), 0.0);
      r.far = -b + std::sqrt(disc);
    } else {
      r.near = 0.0;
      r.far = origin.norm() + bound_radius;
    }
    rays.push_back(r);
  }
  return rays;
}

void write_obj(const std::filesystem::path& path, const Mesh& m) {
  std::string s;
  s.reserve(m.vertices.size() * 40 + m.faces.size() * 24);
  s += "# dirsurf mesh, resolution " + std::to_string(m.resolution) + "\n";
  for (const auto& v : m.vertices)
    s += "v " + io::format_double(v.x()) + " " + io::format_double(v.y()) + " " + io::format_double(v.z()) + "\n";
  for (const auto& f : m.faces)
    s += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
  io::write_text(path, s);
}

void write_polylines_json(const std::filesystem::path& path, const Polylines& p) {
  nlohmann::json j;
  j["format"] = "dirsurf-polylines";
  j["version"] = 1;
  j["resolution"] = p.resolution;
  j["polylines"] = nlohmann::json::array();
  for (const auto& chain : p.chains()) {
    nlohmann::json line = nlohmann::json::array();
    for (int v : chain) {
      const Vec3& x = p.vertices[static_cast<std::size_t>(v)];
      line.push_back({x.x(), x.y()});
    }
    j["polylines"].push_back(std::move(line));
  }
  io::write_text(path, j.dump() + "\n");
}

}  // namespace dirsurf::eval
