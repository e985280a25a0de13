#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvsa/harness/samples.hpp"
#include "mvsa/network/model.hpp"

namespace mvsa {

enum class StatusRule { consolidate, majority };

struct PredictOptions {
  /// Dataset views feeding the model (empty: 0..V-1).
  std::vector<int> views;
  /// Cross-view status rule; unset: consolidate with gating, majority without.
  std::optional<StatusRule> status_rule;
  int batch_size = 64;
};

/// Detector-path status of the handled onion at (episode, t) from the given
/// dataset views. `per_view` receives the view statuses when non-null.
Status detector_status(const Dataset& ds, int episode, int t, std::span<const int> views, StatusRule rule,
                       std::vector<Status>* per_view = nullptr);

/// Infer-mode predictions, one per sample, after the domain's decision rules:
/// the detector status (sorting) or the unknown override (patrolling).
std::vector<FusedPrediction> predict(Model& model, const Dataset& ds, std::span<const Sample> samples,
                                     const PredictOptions& options = {});

struct HeadMetrics {
  std::string name;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  /// [true class][predicted class]
  std::vector<std::vector<std::int64_t>> confusion;

  /// Percent.
  double accuracy() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total); }
};

/// Per-head accuracy of one evaluation: state heads, then "action", then
/// "status" for sorting.
struct MetricsReport {
  std::vector<HeadMetrics> heads;
  std::int64_t samples = 0;

  const HeadMetrics& head(const std::string& name) const;
};

MetricsReport score(const Dataset& ds, std::span<const Sample> samples, std::span<const FusedPrediction> preds);

MetricsReport evaluate(Model& model, const Dataset& ds, std::span<const Sample> samples,
                       const PredictOptions& options = {});

nlohmann::json to_json(const MetricsReport& r);

/// One emitted step of a state-action trajectory.
struct TrajectoryStep {
  int episode = 0;
  int t = 0;
  int expert_id = 0;
  std::vector<int> state;  // per state head
  int action = 0;
  std::optional<Status> status;
  std::vector<double> gating_state;
  std::vector<double> gating_action;
};

std::vector<TrajectoryStep> to_trajectory(const MvsaConfig& config, std::span<const Sample> samples,
                                          std::span<const FusedPrediction> preds);
nlohmann::json to_json(const TrajectoryStep& s, const MvsaConfig& config);

/// Fraction of steps whose fused state heads and action all equal the ground
/// truth. The detector status is not part of the match. Throws ConfigError on
/// a length mismatch.
double trajectory_fidelity(std::span<const TrajectoryStep> emitted, std::span<const ExpertLabel> truth);

}  // namespace mvsa
