#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mvsa/core/rng.hpp"
#include "mvsa/core/tensor.hpp"
#include "mvsa/network/detection.hpp"

namespace mvsa {

enum class CorruptionKind { gaussian_noise, overexposure, view_dropout };

struct Corruption {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  double sigma = 0.0;  // gaussian_noise
  double gain = 1.0;   // overexposure
  std::vector<int> views;

  bool targets(int view) const;
  bool operator==(const Corruption&) const = default;
};

/// Parses "noise:view=0,sigma=0.05", "overexposure:view=1+2,gain=3" or
/// "dropout:view=2"; several entries are separated by ';'. Empty -> none.
/// Throws ConfigError on malformed input.
std::vector<Corruption> parse_corruptions(const std::string& spec);
std::string format_corruptions(const std::vector<Corruption>& list);

/// Corrupts the RGB channels of an [..., 4] or [..., 3] frame in place
/// (dropout zeroes every channel). Values stay in [0, 1].
void corrupt(Tensor& frame, const Corruption& c, Rng& rng);

/// How a corrupted view degrades the oracle detector: noise lowers confidence
/// by 2.5 sigma, overexposure (gain >= 2) washes out blemishes and lowers
/// confidence by 0.05 (gain - 1), dropout removes every detection.
std::vector<Detection> degrade_detections(std::vector<Detection> dets, const Corruption& c);

}  // namespace mvsa
