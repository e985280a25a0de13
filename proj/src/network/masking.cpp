#include "mvsa/network/masking.hpp"

#include <algorithm>
#include <cmath>

#include "mvsa/core/error.hpp"

namespace mvsa {

const HeadPrediction& FusedPrediction::head(const std::string& name) const {
  if (name == action.name) return action;
  for (const auto& h : heads) {
    if (h.name == name) return h;
  }
  throw ConfigError("prediction has no head '" + name + "'");
}

namespace {

struct PixelRect {
  std::int64_t x0, y0, x1, y1;  // half-open

  bool contains(std::int64_t x, std::int64_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

PixelRect pixel_rect(const BBox& b, int dilation, std::int64_t h, std::int64_t w) {
  return {std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(b.x_min)) - dilation, 0, w),
          std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(b.y_min)) - dilation, 0, h),
          std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.x_max)) + dilation, 0, w),
          std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(b.y_max)) + dilation, 0, h)};
}

}  // namespace

void erase_other_experts(std::span<float> hwc, std::int64_t h, std::int64_t w, std::int64_t c,
                         std::span<const Detection> experts, int keep_object, int dilation) {
  if (static_cast<std::int64_t>(hwc.size()) != h * w * c) throw ConfigError("erase_other_experts: frame size");
  std::vector<PixelRect> keep;
  for (const auto& d : experts) {
    if (d.object_id == keep_object) keep.push_back(pixel_rect(d.box, 0, h, w));
  }
  for (const auto& d : experts) {
    if (d.object_id == keep_object) continue;
    const PixelRect r = pixel_rect(d.box, dilation, h, w);
    for (std::int64_t y = r.y0; y < r.y1; ++y) {
      for (std::int64_t x = r.x0; x < r.x1; ++x) {
        const bool kept = std::any_of(keep.begin(), keep.end(), [&](const PixelRect& k) { return k.contains(x, y); });
        if (kept) continue;
        std::fill_n(hwc.begin() + (y * w + x) * c, c, 0.0f);
      }
    }
  }
}

ExpertMaskSet mask_split(const Tensor& frame, std::span<const Detection> experts, int dilation) {
  if (frame.rank() != 3) throw ConfigError("mask_split: expected an [H, W, C] frame");
  ExpertMaskSet set;
  for (const auto& d : experts) {
    Tensor masked = frame;
    erase_other_experts(masked.span(), frame.dim(0), frame.dim(1), frame.dim(2), experts, d.object_id, dilation);
    set.frames.push_back(std::move(masked));
    set.expert_ids.push_back(d.object_id);
    set.retained.push_back(d);
  }
  return set;
}

namespace {

void force_unknown(HeadPrediction& h) {
  if (h.unknown_index < 0) return;
  h.label = h.unknown_index;
  h.fused.assign(static_cast<std::size_t>(std::max<int>(h.unknown_index + 1, static_cast<int>(h.fused.size()))), 0.0);
  h.fused[static_cast<std::size_t>(h.unknown_index)] = 1.0;
}

}  // namespace

FusedPrediction unknown_override(FusedPrediction pred, std::span<const Detection> expert_detections) {
  if (!expert_detections.empty()) return pred;
  for (auto& h : pred.heads) force_unknown(h);
  force_unknown(pred.action);
  pred.unknown = true;
  return pred;
}

}  // namespace mvsa
