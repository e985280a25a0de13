#pragma once

#include <span>
#include <vector>

#include "mvsa/network/detection.hpp"

namespace mvsa {

inline constexpr double kMinConfidence = 0.5;
inline constexpr double kEffectorRadiusPx = 40.0;

struct Point {
  double x = 0, y = 0;
};

/// Status of the onion being handled in one view.
///  1. drop detections with confidence < 0.5; none left -> unknown
///  2. onions centred strictly closer than `effector_radius` to the effector:
///     the most confident one decides
///  3. otherwise the onion whose centre x is closest to the conveyor end
/// Ties go to the higher confidence, then to the earlier detection.
Status select_target_onion(std::span<const Detection> detections, Point effector, double conveyor_end_x,
                           double effector_radius = kEffectorRadiusPx);

/// Any blemished -> blemished; all unknown -> unknown; else unblemished.
Status consolidate_status(std::span<const Status> per_view);

/// Majority label over views, ignoring unknown; ties go to blemished.
Status majority_status(std::span<const Status> per_view);

/// Index of the largest element; ties go to the lowest index.
int argmax(std::span<const double> v);

struct FuseResult {
  std::vector<double> distribution;
  int label = 0;
};

/// sum_n g[n] * c[n], then argmax.
FuseResult fuse(std::span<const double> g, const std::vector<std::vector<double>>& c);

}  // namespace mvsa
