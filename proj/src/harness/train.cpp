#include "mvsa/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include "mvsa/harness/batch.hpp"

namespace mvsa {

std::vector<std::vector<Sample>> chunk_samples(std::span<const Sample> samples, int chunk) {
  if (chunk < 1) throw ConfigError("chunk must be >= 1");
  std::vector<std::vector<Sample>> out;
  for (const Sample& s : samples) {
    if (!out.empty()) {
      auto& last = out.back();
      const Sample& p = last.back();
      if (static_cast<int>(last.size()) < chunk && p.episode == s.episode && p.expert == s.expert &&
          p.t + 1 == s.t) {
        last.push_back(s);
        continue;
      }
    }
    out.push_back({s});
  }
  return out;
}

TrainResult train(Model& model, const Dataset& ds, std::span<const Sample> samples, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (samples.empty()) throw ConfigError("train: no samples");
  resolve_views(model.config(), ds, config.views);
  for (const Sample& s : samples) {
    const auto& ex = ds.episodes.at(static_cast<std::size_t>(s.episode)).steps.at(static_cast<std::size_t>(s.t)).experts;
    for (const auto& e : ex) {
      if (e.id == s.expert && !e.visible) throw ConfigError("train: unseen experts carry no training target");
    }
  }

  const auto chunks = chunk_samples(samples, std::min(config.chunk, config.batch_size));
  const auto params = model.parameter_ptrs();
  for (auto* p : params) p->zero_grad();
  AdamHyper hyper;
  hyper.lr = config.lr;
  const Rng root(config.seed);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  std::vector<std::size_t> order(chunks.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = root.split(static_cast<std::uint64_t>(epoch));
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::int64_t loss_n = 0;
    std::size_t next = 0;
    while (next < order.size()) {
      std::vector<Sample> batch;
      while (next < order.size() &&
             static_cast<int>(batch.size() + chunks[order[next]].size()) <= config.batch_size) {
        const auto& c = chunks[order[next++]];
        batch.insert(batch.end(), c.begin(), c.end());
      }
      if (batch.empty()) {  // chunk larger than the batch: take it alone
        const auto& c = chunks[order[next++]];
        batch.assign(c.begin(), c.end());
      }
      const Batch b = make_batch(ds, batch, model.config(), config.views);
      Tape<float> tape;
      ForwardOptions opt;
      opt.mode = BnMode::train;
      const auto vars = model.forward(tape, b.input, opt);
      const Var loss = model.joint_loss(tape, vars, b.labels);
      const double l = tape.value(loss)[0];
      if (!std::isfinite(l)) throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch), epoch, batch);
      tape.backward(loss);
      try {
        adam_step(std::span<BasicParameter<float>* const>(params), hyper);
      } catch (const NumericError& e) {
        for (auto* p : params) p->zero_grad();
        throw TrainingAborted(e.what(), epoch, batch);
      }
      loss_sum += l * static_cast<double>(batch.size());
      loss_n += static_cast<std::int64_t>(batch.size());
      ++result.steps;
    }
    EpochStats st;
    st.epoch = epoch;
    st.mean_loss = loss_sum / static_cast<double>(loss_n);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.loss_history.push_back(st.mean_loss);
    if (on_epoch) on_epoch(st);
  }
  if (config.epochs > 0) recalibrate_batchnorm(model, ds, samples, config, config.bn_recalibration_batches);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void recalibrate_batchnorm(Model& model, const Dataset& ds, std::span<const Sample> samples,
                           const TrainConfig& config, int batches) {
  if (batches < 1 || samples.empty()) return;
  const auto chunks = chunk_samples(samples, std::min(config.chunk, config.batch_size));
  std::vector<std::size_t> order(chunks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(config.seed).split(0xB47C4);
  rng.shuffle(std::span<std::size_t>(order));
  std::map<std::string, double> saved;
  for (auto& [name, st] : model.bn_states()) saved[name] = st.momentum;
  std::size_t next = 0;
  for (int k = 0; k < batches; ++k) {
    std::vector<Sample> batch;
    while (static_cast<int>(batch.size()) < config.batch_size) {
      if (next == order.size()) next = 0;
      const auto& c = chunks[order[next++]];
      batch.insert(batch.end(), c.begin(), c.end());
    }
    // Cumulative average: the k-th batch enters with weight 1 / (k + 1).
    for (auto& [name, st] : model.bn_states()) st.momentum = 1.0 / (k + 1);
    const Batch b = make_batch(ds, batch, model.config(), config.views);
    Tape<float> tape(false);
    ForwardOptions opt;
    opt.mode = BnMode::train;
    model.forward(tape, b.input, opt);
  }
  for (auto& [name, st] : model.bn_states()) st.momentum = saved[name];
}

}  // namespace mvsa
