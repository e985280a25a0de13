#pragma once

#include <span>
#include <vector>

#include "mvsa/core/rng.hpp"
#include "mvsa/network/detection.hpp"

namespace mvsa {

/// Stand-in object detector over render-time ground truth. Each object is
/// kept with probability 1 - miss_rate and its confidence lowered by
/// conf_noise * u, u ~ U(0, 1). Both draws happen for every object so the
/// stream position does not depend on the outcome.
std::vector<Detection> oracle_detector(std::span<const Detection> truth, double miss_rate, double conf_noise,
                                       Rng& rng);

}  // namespace mvsa
