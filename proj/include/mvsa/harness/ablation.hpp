#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvsa/harness/evaluate.hpp"
#include "mvsa/harness/train.hpp"
#include "mvsa/worldgen/corrupt.hpp"

namespace mvsa {

enum class VariantKind { full, single_view, no_gating, no_connection, no_depth };

/// Architecture ablation plus an optional input condition.
struct Variant {
  VariantKind kind = VariantKind::full;
  int view = 0;  // single_view
  /// Noise / bad-lighting corruptions of the input stream.
  std::vector<Corruption> corruption;

  std::string name() const;
};

/// "<arch>[@<condition>]" with arch one of full, single_view:<v>, no_gating,
/// no_connection, no_depth and condition noise:view=<v..>[,sigma=s] or
/// bad_lighting:view=<v..>[,gain=g] (defaults sigma 0.1, gain 3). A bare
/// condition applies to the full model. Throws ConfigError.
Variant parse_variant(const std::string& s);

MvsaConfig variant_config(const MvsaConfig& base, const Variant& v);
/// Dataset views feeding the variant's model.
std::vector<int> variant_views(const MvsaConfig& base, const Variant& v);
std::vector<Corruption> variant_corruptions(const Variant& v);

/// Copy of `clean` with the variant's corruptions applied, seeded from the
/// dataset seed so training and evaluation see the same corrupted stream.
/// Throws ConfigError when a corruption targets a view the dataset lacks.
Dataset variant_dataset(const Dataset& clean, const Variant& v);

/// Accuracy of every head over the folds of one variant.
struct VariantReport {
  std::string variant;
  std::vector<int> folds;
  std::vector<MetricsReport> reports;
  std::vector<double> seconds;

  std::vector<std::string> head_names() const;
  double mean(const std::string& head) const;
  /// Population standard deviation over folds.
  double stddev(const std::string& head) const;
};

struct AblationOptions {
  TrainConfig train;  // views and seed are set per run
  int k = 5;
  std::uint64_t split_seed = 0;
  /// Folds to run (empty: all). Fold f trains with seed base_seed + f.
  std::vector<int> folds;
  std::uint64_t base_seed = 0;
  /// Corruptions also hit the training stream (otherwise only evaluation).
  bool corrupt_training = true;
};

/// Called after each fold with its trained model.
using FoldHook = std::function<void(int fold, Model& model, const MetricsReport& report)>;

VariantReport run_ablation(const Dataset& clean, const MvsaConfig& base, const Variant& variant,
                           const AblationOptions& options, const FoldHook& hook = {});

/// CSV rows "variant,head,fold,accuracy,std,n" with one row per head per fold
/// plus a "mean" row per head; accuracies in percent at 0.1 resolution.
std::string reports_csv(const std::vector<VariantReport>& reports);
nlohmann::json to_json(const VariantReport& r);

}  // namespace mvsa
