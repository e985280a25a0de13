#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvsa/network/detection.hpp"

namespace mvsa {

struct HeadPrediction {
  std::string name;
  /// Per-view distributions C_n; empty for the no-gating variant.
  std::vector<std::vector<double>> per_view;
  std::vector<double> fused;
  int label = 0;
  /// Index of the unknown class, or -1 when the head has none.
  int unknown_index = -1;
};

struct FusedPrediction {
  int expert_id = 0;
  std::vector<HeadPrediction> heads;
  HeadPrediction action;
  std::vector<double> gating_state;
  std::vector<double> gating_action;
  /// Detector-path status (sorting only).
  std::optional<Status> status;
  std::vector<Status> view_status;
  /// Set by the unknown override.
  bool unknown = false;

  const HeadPrediction& head(const std::string& name) const;
};

}  // namespace mvsa
