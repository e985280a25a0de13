#pragma once

#include <array>

#include "mvsa/core/tensor.hpp"

namespace mvsa {

/// RGB plus depth, every component in [0, 1].
struct Rgbd {
  float r = 0, g = 0, b = 0, d = 0;
};

/// Thin drawing layer over an [H, W, 4] frame.
class Canvas {
 public:
  Canvas(std::int64_t height, std::int64_t width) : frame_(Shape{height, width, 4}) {}

  std::int64_t height() const { return frame_.dim(0); }
  std::int64_t width() const { return frame_.dim(1); }
  Tensor& frame() { return frame_; }
  const Tensor& frame() const { return frame_; }

  void put(std::int64_t x, std::int64_t y, const Rgbd& c);
  void put_rgb(std::int64_t x, std::int64_t y, float r, float g, float b);
  /// Half-open pixel rectangle [x0, x1) x [y0, y1), clipped to the frame.
  void fill_rect(double x0, double y0, double x1, double y1, const Rgbd& c);
  /// Pixels whose centre lies within `radius` of (cx, cy). Returns the
  /// half-open bounding box of the touched pixels (empty when none).
  std::array<std::int64_t, 4> fill_disc(double cx, double cy, double radius, const Rgbd& c);

 private:
  Tensor frame_;
};

}  // namespace mvsa
