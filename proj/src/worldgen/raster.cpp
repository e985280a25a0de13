#include "mvsa/worldgen/raster.hpp"

#include <algorithm>
#include <cmath>

namespace mvsa {

void Canvas::put(std::int64_t x, std::int64_t y, const Rgbd& c) {
  if (x < 0 || y < 0 || x >= width() || y >= height()) return;
  float* p = frame_.data() + (y * width() + x) * 4;
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
  p[3] = c.d;
}

void Canvas::put_rgb(std::int64_t x, std::int64_t y, float r, float g, float b) {
  if (x < 0 || y < 0 || x >= width() || y >= height()) return;
  float* p = frame_.data() + (y * width() + x) * 4;
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void Canvas::fill_rect(double x0, double y0, double x1, double y1, const Rgbd& c) {
  const auto xa = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(x0)), 0, width());
  const auto ya = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(y0)), 0, height());
  const auto xb = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(x1)), 0, width());
  const auto yb = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(y1)), 0, height());
  for (std::int64_t y = ya; y < yb; ++y)
    for (std::int64_t x = xa; x < xb; ++x) put(x, y, c);
}

std::array<std::int64_t, 4> Canvas::fill_disc(double cx, double cy, double radius, const Rgbd& c) {
  std::array<std::int64_t, 4> box{width(), height(), 0, 0};
  const auto xa = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cx - radius)));
  const auto xb = std::min<std::int64_t>(width(), static_cast<std::int64_t>(std::ceil(cx + radius)) + 1);
  const auto ya = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(cy - radius)));
  const auto yb = std::min<std::int64_t>(height(), static_cast<std::int64_t>(std::ceil(cy + radius)) + 1);
  for (std::int64_t y = ya; y < yb; ++y) {
    for (std::int64_t x = xa; x < xb; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy > radius * radius) continue;
      put(x, y, c);
      box = {std::min(box[0], x), std::min(box[1], y), std::max(box[2], x + 1), std::max(box[3], y + 1)};
    }
  }
  if (box[2] <= box[0]) {
    // Sub-pixel blob: mark the pixel holding the centre.
    const auto x = static_cast<std::int64_t>(std::floor(cx));
    const auto y = static_cast<std::int64_t>(std::floor(cy));
    if (x < 0 || y < 0 || x >= width() || y >= height()) return {0, 0, 0, 0};
    put(x, y, c);
    return {x, y, x + 1, y + 1};
  }
  return box;
}

}  // namespace mvsa
