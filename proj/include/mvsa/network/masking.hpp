#pragma once

#include <span>
#include <vector>

#include "mvsa/core/tensor.hpp"
#include "mvsa/network/detection.hpp"
#include "mvsa/network/prediction.hpp"

namespace mvsa {

inline constexpr int kMaskDilationPx = 4;

struct ExpertMaskSet {
  std::vector<Tensor> frames;
  std::vector<int> expert_ids;
  std::vector<Detection> retained;

  /// No expert detected: the caller must apply the unknown override.
  bool unknown() const { return frames.empty(); }
};

/// Zero-fills (all channels) every detection box of an object other than
/// `keep_object`, dilated by `dilation` px. Pixels inside the kept object's
/// own box are never erased. `hwc` is one [H, W, C] frame.
void erase_other_experts(std::span<float> hwc, std::int64_t h, std::int64_t w, std::int64_t c,
                         std::span<const Detection> experts, int keep_object, int dilation = kMaskDilationPx);

/// One masked copy of `frame` [H, W, C] per expert detection.
ExpertMaskSet mask_split(const Tensor& frame, std::span<const Detection> experts, int dilation = kMaskDilationPx);

/// When no view detected this expert, every head and the action become the
/// unknown class (one-hot distributions); otherwise `pred` is returned as is.
FusedPrediction unknown_override(FusedPrediction pred, std::span<const Detection> expert_detections);

}  // namespace mvsa
