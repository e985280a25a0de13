#pragma once

#include <span>
#include <vector>

#include "mvsa/harness/samples.hpp"
#include "mvsa/network/model.hpp"

namespace mvsa {

struct Batch {
  BatchInput<float> input;
  BatchLabels labels;
};

/// Dataset view feeding each model view: `views` when given, else 0..V-1.
std::vector<int> resolve_views(const MvsaConfig& config, const Dataset& ds, std::span<const int> views = {});

/// Gathers the frames of `samples` into a batch. A frame needed by several
/// samples is copied once. Depth is dropped when the config has 3 channels;
/// in the patrolling domain every frame is masked down to the sample's expert.
Batch make_batch(const Dataset& ds, std::span<const Sample> samples, const MvsaConfig& config,
                 std::span<const int> views = {});

}  // namespace mvsa
