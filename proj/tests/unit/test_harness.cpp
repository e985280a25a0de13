#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "mvsa/core/error.hpp"
#include "mvsa/core/tensor_io.hpp"
#include "mvsa/harness/evaluate.hpp"
#include "mvsa/harness/samples.hpp"
#include "mvsa/harness/train.hpp"

namespace mvsa {
namespace {

DatasetSpec sorting_spec(int episodes, int steps, int h = 24, int w = 32) {
  DatasetSpec s = default_spec(Domain::sorting);
  s.episodes = episodes;
  s.steps = steps;
  s.step_jitter = 0;
  s.height = h;
  s.width = w;
  s.seed = 17;
  return s;
}

TEST(Windows, CountsPerEpisodeLength) {
  const auto c = sorting_config();
  for (auto [len, want] : {std::pair{7, 3}, std::pair{5, 1}, std::pair{4, 0}}) {
    // The generator refuses episodes shorter than a window; cut one down.
    auto ds = generate_dataset(sorting_spec(1, std::max(len, 5)));
    auto& ep = ds.episodes[0];
    ep.steps.resize(static_cast<std::size_t>(len));
    ASSERT_EQ(ds.episodes[0].length(), len);
    const auto w = build_windows(ds, c);
    EXPECT_EQ(static_cast<int>(w.samples.size()), want) << "length " << len;
    if (want == 0) {
      EXPECT_EQ(w.skipped, std::vector<int>{0});
      EXPECT_EQ(w.warnings.size(), 1u);
    } else {
      EXPECT_EQ(w.samples.front().t, 4);
      EXPECT_TRUE(w.warnings.empty());
    }
  }
}

TEST(Windows, ExcludingCurrentFrameShiftsStart) {
  auto c = sorting_config();
  c.window_includes_current = false;
  const auto ds = generate_dataset(sorting_spec(1, 7));
  const auto w = build_windows(ds, c);
  ASSERT_EQ(w.samples.size(), 2u);
  EXPECT_EQ(w.samples.front().t, 5);
}

TEST(KFold, PartitionsEpisodes) {
  const auto split = kfold(23, 5, 99);
  std::multiset<int> all;
  for (int f = 0; f < 5; ++f) {
    const auto test = split.test_episodes(f);
    const auto train = split.train_episodes(f);
    EXPECT_GE(test.size(), 4u);
    EXPECT_LE(test.size(), 5u);
    EXPECT_EQ(test.size() + train.size(), 23u);
    for (int e : test) EXPECT_FALSE(std::binary_search(train.begin(), train.end(), e));
    all.insert(test.begin(), test.end());
  }
  EXPECT_EQ(all.size(), 23u);
  EXPECT_EQ(std::set<int>(all.begin(), all.end()).size(), 23u);
  EXPECT_EQ(kfold(23, 5, 99).folds, split.folds);
  EXPECT_NE(kfold(23, 5, 100).folds, split.folds);
  EXPECT_THROW(kfold(3, 5, 0), ConfigError);
  EXPECT_THROW(kfold(10, 1, 0), ConfigError);
}

// Predictions that copy or ignore the ground truth.
std::vector<FusedPrediction> label_predictions(const Dataset& ds, const std::vector<Sample>& samples, bool oracle) {
  std::vector<FusedPrediction> out;
  for (const auto& s : samples) {
    const auto& ex = ds.episodes[static_cast<std::size_t>(s.episode)].steps[static_cast<std::size_t>(s.t)]
                         .experts[static_cast<std::size_t>(s.expert)];
    FusedPrediction p;
    for (std::size_t h = 0; h < ds.schema.state_heads.size(); ++h) {
      HeadPrediction hp;
      hp.name = ds.schema.state_heads[h].name;
      hp.label = oracle ? ex.heads[h] : 0;
      p.heads.push_back(hp);
    }
    p.action.name = "action";
    p.action.label = oracle ? ex.action : 0;
    p.status = oracle ? ex.status : Status::unblemished;
    out.push_back(p);
  }
  return out;
}

TEST(Score, OracleAndConstantPredictors) {
  const auto ds = generate_dataset(sorting_spec(3, 30, 12, 16));
  const auto samples = build_windows(ds, sorting_config()).samples;
  const auto perfect = score(ds, samples, label_predictions(ds, samples, true));
  for (const auto& h : perfect.heads) EXPECT_DOUBLE_EQ(h.accuracy(), 100.0) << h.name;
  EXPECT_EQ(perfect.samples, static_cast<std::int64_t>(samples.size()));

  // A constant predictor scores the frequency of its class.
  const auto constant = score(ds, samples, label_predictions(ds, samples, false));
  std::map<std::string, int> hits;
  for (const auto& s : samples) {
    const auto& ex = ds.episodes[static_cast<std::size_t>(s.episode)].steps[static_cast<std::size_t>(s.t)].experts[0];
    hits["onion_location"] += ex.heads[0] == 0;
    hits["eff_location"] += ex.heads[1] == 0;
    hits["action"] += ex.action == 0;
    hits["status"] += ex.status == Status::unblemished;
  }
  for (const auto& [name, n] : hits) {
    EXPECT_NEAR(constant.head(name).accuracy(), 100.0 * n / static_cast<double>(samples.size()), 1e-9) << name;
    std::int64_t row_sum = 0;
    for (const auto& row : constant.head(name).confusion) {
      for (auto x : row) row_sum += x;
    }
    EXPECT_EQ(row_sum, static_cast<std::int64_t>(samples.size()));
  }
}

TEST(Fidelity, CountsFullMatchesOnly) {
  std::vector<TrajectoryStep> emitted(4);
  std::vector<ExpertLabel> truth(4);
  for (int i = 0; i < 4; ++i) {
    emitted[static_cast<std::size_t>(i)].state = {1, 2};
    emitted[static_cast<std::size_t>(i)].action = 3;
    truth[static_cast<std::size_t>(i)].heads = {1, 2};
    truth[static_cast<std::size_t>(i)].action = 3;
  }
  EXPECT_DOUBLE_EQ(trajectory_fidelity(emitted, truth), 1.0);
  emitted[1].action = 0;
  EXPECT_DOUBLE_EQ(trajectory_fidelity(emitted, truth), 0.75);
  emitted[2].state = {1, 0};
  EXPECT_DOUBLE_EQ(trajectory_fidelity(emitted, truth), 0.5);
  // Status is not part of the match.
  emitted[0].status = Status::blemished;
  truth[0].status = Status::unblemished;
  EXPECT_DOUBLE_EQ(trajectory_fidelity(emitted, truth), 0.5);
  truth.pop_back();
  EXPECT_THROW(trajectory_fidelity(emitted, truth), ConfigError);
}

MvsaConfig tiny_model(const Dataset& ds) {
  MvsaConfig c = ds.schema;
  c.filters = 8;
  c.hidden1 = 32;
  c.hidden2 = 16;
  return c;
}

TEST(Train, OverfitsEightSamples) {
  const auto ds = generate_dataset(sorting_spec(2, 30, 30, 40));
  auto samples = build_windows(ds, ds.schema).samples;
  // Eight samples spread over the cycle.
  std::vector<Sample> few;
  for (std::size_t i = 0; i < samples.size() && few.size() < 8; i += samples.size() / 8) few.push_back(samples[i]);
  ASSERT_EQ(few.size(), 8u);
  Model m(tiny_model(ds), 3);
  TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 8;
  tc.chunk = 1;
  tc.seed = 4;
  tc.bn_recalibration_batches = 0;
  const auto r = train(m, ds, few, tc);
  EXPECT_EQ(r.steps, 300);
  EXPECT_LT(r.loss_history.back(), 0.1);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Train, SameSeedSameWeights) {
  const auto ds = generate_dataset(sorting_spec(2, 14, 30, 40));
  const auto samples = build_windows(ds, ds.schema).samples;
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 8;
  tc.bn_recalibration_batches = 3;
  Model a(tiny_model(ds), 1), b(tiny_model(ds), 1);
  const auto ra = train(a, ds, samples, tc);
  const auto rb = train(b, ds, samples, tc);
  EXPECT_EQ(ra.loss_history, rb.loss_history);
  for (const auto& p : a.parameters()) {
    ASSERT_EQ(encode_tensor(p.value), encode_tensor(b.parameter(p.name).value)) << p.name;
  }
  for (const auto& [name, st] : a.bn_states()) {
    ASSERT_EQ(encode_tensor(st.running_var), encode_tensor(b.bn_states().at(name).running_var)) << name;
  }
}

TEST(Train, NonFiniteLossAborts) {
  const auto ds = generate_dataset(sorting_spec(1, 10, 30, 40));
  const auto samples = build_windows(ds, ds.schema).samples;
  Model m(tiny_model(ds), 2);
  auto& bias = m.parameter("view0.action_cls.out.bias");
  bias.value[0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = encode_tensor(m.parameter("view1.state.conv1.kernel").value);
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(m, ds, samples, tc);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.epoch(), 0);
    EXPECT_FALSE(e.batch().empty());
  }
  EXPECT_EQ(encode_tensor(m.parameter("view1.state.conv1.kernel").value), before);
}

TEST(Train, RejectsUnseenExperts) {
  auto spec = default_spec(Domain::patrolling);
  spec.episodes = 1;
  spec.steps = 60;
  spec.height = 30;
  spec.width = 40;
  const auto ds = generate_dataset(spec);
  const auto all = build_windows(ds, ds.schema, {}, true).samples;
  const auto seen = build_windows(ds, ds.schema).samples;
  ASSERT_GT(all.size(), seen.size());
  Model m(tiny_model(ds), 1);
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train(m, ds, all, tc), ConfigError);
}

}  // namespace
}  // namespace mvsa
