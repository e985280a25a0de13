#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvsa/core/adam.hpp"
#include "mvsa/core/error.hpp"
#include "mvsa/harness/samples.hpp"
#include "mvsa/network/model.hpp"

namespace mvsa {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Batches are built from runs of this many consecutive windows of one
  /// episode, so neighbouring samples share most of their frames.
  int chunk = 4;
  /// Dataset views feeding the model (empty: 0..V-1).
  std::vector<int> views;
  /// Train-mode passes used to re-estimate batch-norm statistics after the
  /// last epoch (0 keeps the moving averages).
  int bn_recalibration_batches = 50;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<double> loss_history;  // epoch means
  std::int64_t steps = 0;
  double seconds = 0.0;
};

/// Non-finite loss or gradient. Parameters keep their values from before the
/// offending batch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, int epoch, std::vector<Sample> batch)
      : NumericError(what), epoch_(epoch), batch_(std::move(batch)) {}
  int epoch() const { return epoch_; }
  const std::vector<Sample>& batch() const { return batch_; }

 private:
  int epoch_;
  std::vector<Sample> batch_;
};

/// Shuffled batches of chunked windows; joint loss, backward and Adam per
/// batch with batch norm in train mode; then batch-norm recalibration.
TrainResult train(Model& model, const Dataset& ds, std::span<const Sample> samples, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Re-estimates every batch-norm running statistic as the plain average over
/// `batches` train-mode passes (no weight update), replacing the moving
/// average accumulated while the weights were still changing.
void recalibrate_batchnorm(Model& model, const Dataset& ds, std::span<const Sample> samples,
                           const TrainConfig& config, int batches);

/// Sample runs of at most `chunk` consecutive windows of one (episode, expert).
std::vector<std::vector<Sample>> chunk_samples(std::span<const Sample> samples, int chunk);

}  // namespace mvsa
