#include "mvsa/harness/samples.hpp"

#include <algorithm>
#include <numeric>

#include "mvsa/core/error.hpp"

namespace mvsa {

int first_window_step(const MvsaConfig& config) {
  return config.window_includes_current ? config.window - 1 : config.window;
}

Windows build_windows(const Dataset& ds, const MvsaConfig& config, const std::vector<int>& episodes,
                      bool include_unseen) {
  std::vector<int> ids = episodes;
  if (ids.empty()) {
    ids.resize(ds.episodes.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  const int first = first_window_step(config);
  Windows w;
  for (int k : ids) {
    if (k < 0 || k >= static_cast<int>(ds.episodes.size())) {
      throw ConfigError("build_windows: no episode " + std::to_string(k));
    }
    const Episode& ep = ds.episodes[static_cast<std::size_t>(k)];
    if (ep.length() <= first) {
      w.skipped.push_back(k);
      w.warnings.push_back("episode " + std::to_string(k) + " has " + std::to_string(ep.length()) +
                           " steps; no full window");
      continue;
    }
    for (int t = first; t < ep.length(); ++t) {
      for (const auto& e : ep.steps[static_cast<std::size_t>(t)].experts) {
        if (e.visible || include_unseen) w.samples.push_back({k, t, e.id});
      }
    }
  }
  return w;
}

std::vector<int> FoldSplit::test_episodes(int fold) const {
  if (fold < 0 || fold >= static_cast<int>(folds.size())) throw ConfigError("no fold " + std::to_string(fold));
  return folds[static_cast<std::size_t>(fold)];
}

std::vector<int> FoldSplit::train_episodes(int fold) const {
  if (fold < 0 || fold >= static_cast<int>(folds.size())) throw ConfigError("no fold " + std::to_string(fold));
  std::vector<int> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (static_cast<int>(f) != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldSplit kfold(int num_episodes, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2");
  if (num_episodes < k) {
    throw ConfigError("kfold: " + std::to_string(num_episodes) + " episodes cannot fill " + std::to_string(k) +
                      " folds");
  }
  std::vector<int> order(static_cast<std::size_t>(num_episodes));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));
  FoldSplit s;
  s.k = k;
  s.seed = seed;
  s.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < order.size(); ++i) s.folds[i % static_cast<std::size_t>(k)].push_back(order[i]);
  for (auto& f : s.folds) std::sort(f.begin(), f.end());
  return s;
}

}  // namespace mvsa
