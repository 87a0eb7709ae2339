#include "figures.hpp"

#include <algorithm>
#include <cmath>

namespace dirsurf::app {

Canvas::Canvas(int size, double half) : img_(size, size, 3), half_(half) {
  std::fill(img_.data.begin(), img_.data.end(), 1.0);
}

Eigen::Vector2d Canvas::to_pixel(const Vec3& p) const {
  const double s = img_.width / (2.0 * half_);
  return {(p.x() + half_) * s, (half_ - p.y()) * s};
}

void Canvas::put(int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
  for (int k = 0; k < 3; ++k) img_.at(x, y, k) = c[k];
}

void Canvas::fill_sdf(const scenes::AnalyticSdf& sdf) {
  const double s = 2.0 * half_ / img_.width;
  for (int y = 0; y < img_.height; ++y)
    for (int x = 0; x < img_.width; ++x) {
      const Vec3 p(-half_ + (x + 0.5) * s, half_ - (y + 0.5) * s, 0.0);
      const double f = sdf.value(p);
      // Inside dark, outside light, with faint distance bands.
      const double band = 0.04 * (std::fmod(std::fabs(f), 0.1) < 0.05 ? 1.0 : 0.0);
      put(x, y, Rgb::Constant(f < 0.0 ? 0.3 + band : 0.92 - band));
    }
}

void Canvas::dot(const Vec3& p, const Rgb& color, int radius) {
  const Eigen::Vector2d q = to_pixel(p);
  const int cx = static_cast<int>(std::floor(q.x()));
  const int cy = static_cast<int>(std::floor(q.y()));
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) put(cx + dx, cy + dy, color);
}

void Canvas::line(const Vec3& a, const Vec3& b, const Rgb& color) {
  const Eigen::Vector2d pa = to_pixel(a), pb = to_pixel(b);
  const int n = std::max(1, static_cast<int>(std::ceil((pb - pa).cwiseAbs().maxCoeff())));
  for (int i = 0; i <= n; ++i) {
    const Eigen::Vector2d q = pa + (pb - pa) * (static_cast<double>(i) / n);
    put(static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())), color);
  }
}

void Canvas::polylines(const eval::Polylines& p, const Rgb& color) {
  for (const auto& s : p.segments) line(p.vertices[static_cast<std::size_t>(s[0])], p.vertices[static_cast<std::size_t>(s[1])], color);
}

io::Image side_by_side(const std::vector<io::Image>& panels) {
  constexpr int kGutter = 4;
  int width = 0, height = 0;
  for (const auto& p : panels) {
    width += p.width + (width > 0 ? kGutter : 0);
    height = std::max(height, p.height);
  }
  io::Image out(width, height, 3);
  std::fill(out.data.begin(), out.data.end(), 1.0);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int k = 0; k < 3; ++k)
      for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) out.at(x0 + x, y, k) = p.at(x, y, std::min(k, p.channels - 1));
    x0 += p.width + kGutter;
  }
  return out;
}

Rgb direction_color(const Vec3& d) { return (Rgb::Ones() + d) * 0.5; }

}  // namespace dirsurf::app
