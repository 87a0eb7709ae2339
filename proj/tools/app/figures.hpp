#pragma once

// Small raster figures for diagnostics: top-down views of flatland scenes with
// contours, rays and per-sample directions.

#include "dirsurf/eval.hpp"
#include "dirsurf/io.hpp"
#include "dirsurf/scenes.hpp"

namespace dirsurf::app {

/// Square RGB canvas over [-half, half]^2 in the xy plane (y up).
class Canvas {
 public:
  Canvas(int size, double half);

  void fill_sdf(const scenes::AnalyticSdf& sdf);
  void dot(const Vec3& p, const Rgb& color, int radius = 0);
  void line(const Vec3& a, const Vec3& b, const Rgb& color);
  void polylines(const eval::Polylines& p, const Rgb& color);

  const io::Image& image() const { return img_; }

 private:
  io::Image img_;
  double half_;
  void put(int x, int y, const Rgb& c);
  Eigen::Vector2d to_pixel(const Vec3& p) const;
};

/// Panels placed left to right with a 4-pixel white gutter.
io::Image side_by_side(const std::vector<io::Image>& panels);

/// Direction as a color: (0.5 + 0.5 x, 0.5 + 0.5 y, 0.5 + 0.5 z).
Rgb direction_color(const Vec3& d);

}  // namespace dirsurf::app
