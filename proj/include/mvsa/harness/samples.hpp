#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvsa/worldgen/dataset.hpp"

namespace mvsa {

/// One prediction target: expert `expert` of episode `episode` at time t. The
/// frames and detections stay in the dataset.
struct Sample {
  int episode = 0;
  int t = 0;
  int expert = 0;

  bool operator==(const Sample&) const = default;
};

struct Windows {
  std::vector<Sample> samples;
  /// Episodes too short for a single window.
  std::vector<int> skipped;
  std::vector<std::string> warnings;
};

/// First time step with a full window: 4 when the window ends at t, 5 when it
/// ends at t-1.
int first_window_step(const MvsaConfig& config);

/// Samples for every t in [first_window_step, T-1] of the listed episodes (all
/// when `episodes` is empty). Experts seen by no camera are left out unless
/// `include_unseen`.
Windows build_windows(const Dataset& ds, const MvsaConfig& config, const std::vector<int>& episodes = {},
                      bool include_unseen = false);

struct FoldSplit {
  int k = 5;
  std::uint64_t seed = 0;
  /// Episode ids per fold.
  std::vector<std::vector<int>> folds;

  std::vector<int> test_episodes(int fold) const;
  std::vector<int> train_episodes(int fold) const;
};

/// Episodes shuffled with a seeded Rng, then dealt round-robin.
FoldSplit kfold(int num_episodes, int k, std::uint64_t seed);

}  // namespace mvsa
