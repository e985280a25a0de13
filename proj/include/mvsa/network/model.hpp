#pragma once

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvsa/core/ops.hpp"
#include "mvsa/core/rng.hpp"
#include "mvsa/network/config.hpp"
#include "mvsa/network/prediction.hpp"

namespace mvsa {

/// Frames of one mini-batch. Every distinct frame is stored once per view;
/// samples refer to it by index, so overlapping windows share the
/// time-distributed stem.
template <typename T>
struct BatchInput {
  /// Per view: [U, H, W, C].
  std::vector<BasicTensor<T>> frames;
  /// Row of `frames` holding time t of each sample.
  std::vector<std::int64_t> state_index;
  /// Rows of `frames` for the action window of each sample, oldest first.
  std::vector<std::array<std::int64_t, 5>> window_index;

  std::int64_t size() const { return static_cast<std::int64_t>(state_index.size()); }
};

struct BatchLabels {
  /// [head][sample]
  std::vector<std::vector<std::int64_t>> heads;
  std::vector<std::int64_t> action;
};

struct ForwardOptions {
  BnMode mode = BnMode::infer;
  /// Replaces both gating networks' outputs with these per-view weights.
  std::optional<std::vector<double>> gating_override;
};

/// Tape handles of one forward pass; all distributions are [N, k].
struct ForwardVars {
  std::vector<Var> head_fused;
  std::vector<std::vector<Var>> head_per_view;  // [head][view]; empty without gating
  Var action_fused;
  std::vector<Var> action_per_view;
  Var gating_state;   // [N, V]; invalid without gating
  Var gating_action;
};

template <typename T>
class BasicModel {
 public:
  BasicModel() = default;
  /// Builds every layer and initializes weights from `seed`.
  BasicModel(MvsaConfig config, std::uint64_t seed);

  const MvsaConfig& config() const { return config_; }

  std::deque<BasicParameter<T>>& parameters() { return params_; }
  const std::deque<BasicParameter<T>>& parameters() const { return params_; }
  std::vector<BasicParameter<T>*> parameter_ptrs();
  BasicParameter<T>& parameter(const std::string& name);
  const BasicParameter<T>& parameter(const std::string& name) const;
  bool has_parameter(const std::string& name) const { return index_.count(name) != 0; }

  std::map<std::string, BatchNormState<T>>& bn_states() { return bn_; }
  const std::map<std::string, BatchNormState<T>>& bn_states() const { return bn_; }

  /// Copy with every parameter and batch-norm statistic converted to U.
  template <typename U>
  BasicModel<U> cast() const;

  ForwardVars forward(Tape<T>& tape, const BatchInput<T>& batch, const ForwardOptions& options);

  /// Sum over state heads and the action of the batch-mean NLL of the fused
  /// distributions.
  Var joint_loss(Tape<T>& tape, const ForwardVars& vars, const BatchLabels& labels) const;

  /// Values of a forward pass as one prediction per sample (no decision rules).
  std::vector<FusedPrediction> predictions(const Tape<T>& tape, const ForwardVars& vars) const;

  /// Per-view state features f_n of a single-frame batch [N, H, W, C]
  /// (infer mode unless told otherwise).
  BasicTensor<T> state_features(int view, const BasicTensor<T>& frames, BnMode mode = BnMode::infer);

 private:
  template <typename U>
  friend class BasicModel;

  void add_param(const std::string& name, BasicTensor<T> value);
  void add_conv(const std::string& prefix, std::int64_t kh, std::int64_t kw, std::int64_t cin, std::int64_t cout,
                Rng& rng);
  void add_dense(const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng);
  void add_bn(const std::string& prefix, std::int64_t channels);
  void add_trunk(const std::string& prefix, std::int64_t in, Rng& rng);

  MvsaConfig config_;
  std::deque<BasicParameter<T>> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, BatchNormState<T>> bn_;
};

using Model = BasicModel<float>;

}  // namespace mvsa
