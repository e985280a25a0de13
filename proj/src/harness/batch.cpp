#include "mvsa/harness/batch.hpp"

#include <map>
#include <tuple>

#include "mvsa/core/error.hpp"
#include "mvsa/network/masking.hpp"

namespace mvsa {

std::vector<int> resolve_views(const MvsaConfig& config, const Dataset& ds, std::span<const int> views) {
  std::vector<int> out(views.begin(), views.end());
  if (out.empty()) {
    for (int v = 0; v < config.num_views; ++v) out.push_back(v);
  }
  if (static_cast<int>(out.size()) != config.num_views) {
    throw ConfigError("model has " + std::to_string(config.num_views) + " views but " +
                      std::to_string(out.size()) + " dataset views were selected");
  }
  for (int v : out) {
    if (v < 0 || v >= ds.spec.views) throw ConfigError("dataset has no view " + std::to_string(v));
  }
  if (config.height != ds.spec.height || config.width != ds.spec.width) {
    throw ConfigError("model expects " + std::to_string(config.height) + "x" + std::to_string(config.width) +
                      " frames, dataset has " + std::to_string(ds.spec.height) + "x" +
                      std::to_string(ds.spec.width));
  }
  return out;
}

Batch make_batch(const Dataset& ds, std::span<const Sample> samples, const MvsaConfig& config,
                 std::span<const int> views) {
  const auto view_ids = resolve_views(config, ds, views);
  if (samples.empty()) throw ConfigError("make_batch: no samples");
  const bool masked = config.domain == Domain::patrolling;
  const int first = first_window_step(config);
  const int shift = config.window_includes_current ? 0 : 1;

  // Distinct (episode, time, expert) frames in first-use order.
  std::map<std::tuple<int, int, int>, std::int64_t> rows;
  std::vector<std::tuple<int, int, int>> order;
  const auto row_of = [&](int ep, int t, int expert) {
    const auto key = std::make_tuple(ep, t, masked ? expert : 0);
    auto [it, inserted] = rows.emplace(key, static_cast<std::int64_t>(order.size()));
    if (inserted) order.push_back(key);
    return it->second;
  };

  Batch b;
  b.labels.heads.resize(config.state_heads.size());
  for (const Sample& s : samples) {
    if (s.episode < 0 || s.episode >= static_cast<int>(ds.episodes.size())) {
      throw ConfigError("make_batch: no episode " + std::to_string(s.episode));
    }
    const Episode& ep = ds.episodes[static_cast<std::size_t>(s.episode)];
    if (s.t < first || s.t >= ep.length()) {
      throw ConfigError("make_batch: time " + std::to_string(s.t) + " has no full window");
    }
    std::array<std::int64_t, 5> win{};
    for (int i = 0; i < 5; ++i) win[static_cast<std::size_t>(i)] = row_of(s.episode, s.t - shift - 4 + i, s.expert);
    b.input.window_index.push_back(win);
    b.input.state_index.push_back(row_of(s.episode, s.t, s.expert));
    const ExpertLabel* label = nullptr;
    for (const auto& e : ep.steps[static_cast<std::size_t>(s.t)].experts) {
      if (e.id == s.expert) label = &e;
    }
    if (label == nullptr) throw ConfigError("make_batch: no expert " + std::to_string(s.expert));
    if (label->heads.size() != config.state_heads.size()) throw ConfigError("make_batch: label schema mismatch");
    for (std::size_t h = 0; h < label->heads.size(); ++h) b.labels.heads[h].push_back(label->heads[h]);
    b.labels.action.push_back(label->action);
  }

  const std::int64_t H = config.height, W = config.width, C = config.channels();
  const auto U = static_cast<std::int64_t>(order.size());
  for (int v : view_ids) {
    Tensor frames(Shape{U, H, W, C});
    for (std::int64_t u = 0; u < U; ++u) {
      const auto [ep_id, t, expert] = order[static_cast<std::size_t>(u)];
      const Episode& ep = ds.episodes[static_cast<std::size_t>(ep_id)];
      const float* src = ep.views[static_cast<std::size_t>(v)].data() + t * H * W * 4;
      float* dst = frames.data() + u * H * W * C;
      for (std::int64_t p = 0; p < H * W; ++p) {
        for (std::int64_t c = 0; c < C; ++c) dst[p * C + c] = src[p * 4 + c];
      }
      if (masked) {
        const auto& dets = ep.steps[static_cast<std::size_t>(t)].detections[static_cast<std::size_t>(v)];
        erase_other_experts(std::span<float>(dst, static_cast<std::size_t>(H * W * C)), H, W, C, dets, expert);
      }
    }
    b.input.frames.push_back(std::move(frames));
  }
  return b;
}

}  // namespace mvsa
