#pragma once

#include <vector>

#include "mvsa/core/tensor.hpp"
#include "mvsa/network/detection.hpp"

namespace mvsa {

/// One rendered view of a scene.
struct Rendered {
  Tensor frame;  // [H, W, 4]
  /// Ground truth detections with render-time confidences.
  std::vector<Detection> truth;
};

}  // namespace mvsa
