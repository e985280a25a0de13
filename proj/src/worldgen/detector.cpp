#include "mvsa/worldgen/detector.hpp"

#include <algorithm>

#include "mvsa/core/error.hpp"

namespace mvsa {

std::vector<Detection> oracle_detector(std::span<const Detection> truth, double miss_rate, double conf_noise,
                                       Rng& rng) {
  if (!(miss_rate >= 0.0 && miss_rate < 1.0)) throw ConfigError("oracle_detector: miss_rate must be in [0, 1)");
  if (!(conf_noise >= 0.0)) throw ConfigError("oracle_detector: conf_noise must be >= 0");
  std::vector<Detection> out;
  for (const Detection& d : truth) {
    const bool missed = rng.uniform() < miss_rate;
    const double u = rng.uniform();
    if (missed) continue;
    Detection kept = d;
    if (conf_noise > 0.0) kept.confidence = std::clamp(d.confidence - conf_noise * u, 0.0, 1.0);
    out.push_back(kept);
  }
  return out;
}

}  // namespace mvsa
