#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mvsa/core/error.hpp"
#include "mvsa/core/tensor_io.hpp"
#include "mvsa/network/checkpoint.hpp"
#include "mvsa/network/config.hpp"
#include "mvsa/network/masking.hpp"
#include "mvsa/network/model.hpp"
#include "test_util.hpp"

namespace mvsa {
namespace {

using testing::random_tensor;

MvsaConfig small_config(MvsaConfig c) {
  c.height = 30;
  c.width = 40;
  c.filters = 4;
  c.hidden1 = 8;
  c.hidden2 = 6;
  return c;
}

BatchInput<float> random_batch(const MvsaConfig& c, std::int64_t n, Rng& rng) {
  BatchInput<float> b;
  const std::int64_t frames = n + 4;
  for (int v = 0; v < c.num_views; ++v) {
    b.frames.push_back(random_tensor<float>(Shape{frames, c.height, c.width, c.channels()}, rng, 0.0, 1.0));
  }
  for (std::int64_t i = 0; i < n; ++i) {
    b.state_index.push_back(i + 4);
    b.window_index.push_back({i, i + 1, i + 2, i + 3, i + 4});
  }
  return b;
}

// Inference needs batch-norm statistics; one train-mode pass provides them.
void warm_up(Model& m, const BatchInput<float>& batch) {
  Tape<float> tape(false);
  m.forward(tape, batch, {BnMode::train});
}

TEST(Config, FeatureLengthAtFullResolution) {
  const auto c = sorting_config();
  EXPECT_EQ(c.height, 120);
  EXPECT_EQ(c.width, 160);
  EXPECT_EQ(state_feature_length(c), 32);
  EXPECT_EQ(state_branch_extents(120, 160).back(), (std::pair<std::int64_t, std::int64_t>{1, 1}));
}

TEST(Config, JsonRoundTrip) {
  for (auto c : {sorting_config(3), patrolling_config(2), small_config(sorting_config(1))}) {
    c.use_gating = false;
    c.window_includes_current = false;
    EXPECT_EQ(config_from_json(to_json(c)), c);
  }
}

TEST(Config, PatrolHeadsCarryUnknownSlot) {
  const auto c = patrolling_config();
  ASSERT_EQ(c.state_heads.size(), 3u);
  EXPECT_EQ(c.state_heads[0].width(), 11);
  EXPECT_EQ(c.state_heads[0].unknown_index(), 10);
  EXPECT_EQ(c.action_head.width(), 5);
  for (const auto& h : sorting_config().state_heads) EXPECT_FALSE(h.unknown_slot);
}

TEST(Config, RejectsBadValues) {
  auto c = sorting_config();
  c.window = 4;
  EXPECT_THROW(validate(c), ConfigError);
  c = sorting_config();
  c.num_views = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = sorting_config();
  c.hidden1 = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = sorting_config();
  c.state_heads[0].classes = 1;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(parse_domain("kitchen"), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"domain", "sorting"}, {"height", "tall"}}), ConfigError);
}

Detection box(int object, double x0, double y0, double x1, double y1) {
  Detection d;
  d.label = ObjectClass::patroller;
  d.confidence = 0.9;
  d.object_id = object;
  d.box = {x0, y0, x1, y1};
  return d;
}

// Pixel-by-pixel oracle for the erase rule.
bool oracle_erased(std::int64_t x, std::int64_t y, const std::vector<Detection>& dets, int keep, int dil) {
  auto inside = [&](const BBox& b, int d) {
    return x >= std::floor(b.x_min) - d && x < std::ceil(b.x_max) + d && y >= std::floor(b.y_min) - d &&
           y < std::ceil(b.y_max) + d;
  };
  bool in_other = false, in_keep = false;
  for (const auto& d : dets) {
    if (d.object_id == keep) in_keep = in_keep || inside(d.box, 0);
    else in_other = in_other || inside(d.box, dil);
  }
  return in_other && !in_keep;
}

TEST(Masking, MatchesPixelOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t h = 20, w = 30, c = 4;
    std::vector<Detection> dets;
    for (int k = 0; k < 2; ++k) {
      const double x0 = rng.uniform(-5, 28), y0 = rng.uniform(-5, 18);
      dets.push_back(box(k, x0, y0, x0 + rng.uniform(1, 10), y0 + rng.uniform(1, 8)));
    }
    const Tensor frame = random_tensor<float>(Shape{h, w, c}, rng, 0.1, 1.0);
    const auto set = mask_split(frame, dets);
    ASSERT_EQ(set.frames.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(set.expert_ids[k], static_cast<int>(k));
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          const bool erased = oracle_erased(x, y, dets, static_cast<int>(k), kMaskDilationPx);
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const float want = erased ? 0.0f : frame.at(y, x, ch);
            ASSERT_EQ(set.frames[k].at(y, x, ch), want) << "trial " << trial << " x " << x << " y " << y;
          }
        }
      }
    }
  }
}

TEST(Masking, NoDetectionsMeansUnknown) {
  const Tensor frame(Shape{4, 4, 3});
  EXPECT_TRUE(mask_split(frame, {}).unknown());
}

FusedPrediction patrol_prediction() {
  FusedPrediction p;
  for (const auto& h : patrolling_config().state_heads) {
    HeadPrediction hp;
    hp.name = h.name;
    hp.fused.assign(static_cast<std::size_t>(h.width()), 0.0);
    hp.fused[0] = 0.7;
    hp.fused[1] = 0.3;
    hp.unknown_index = h.unknown_index();
    p.heads.push_back(hp);
  }
  p.action.name = "action";
  p.action.fused = {0.1, 0.6, 0.2, 0.1, 0.0};
  p.action.label = 1;
  p.action.unknown_index = 4;
  return p;
}

TEST(UnknownOverride, ForcesOneHotUnknownAndIsIdempotent) {
  const auto once = unknown_override(patrol_prediction(), {});
  EXPECT_TRUE(once.unknown);
  for (const auto& h : once.heads) {
    EXPECT_EQ(h.label, h.unknown_index);
    EXPECT_DOUBLE_EQ(h.fused[static_cast<std::size_t>(h.unknown_index)], 1.0);
  }
  EXPECT_EQ(once.action.label, 4);
  const auto twice = unknown_override(once, {});
  EXPECT_EQ(twice.action.fused, once.action.fused);
  for (std::size_t i = 0; i < once.heads.size(); ++i) EXPECT_EQ(twice.heads[i].fused, once.heads[i].fused);
}

TEST(UnknownOverride, DetectedExpertIsUntouched) {
  const std::vector<Detection> dets{box(0, 1, 1, 4, 4)};
  const auto p = unknown_override(patrol_prediction(), dets);
  EXPECT_FALSE(p.unknown);
  EXPECT_EQ(p.action.label, 1);
}

TEST(Mixture, MatchesFiniteDifferences) {
  Rng rng(9);
  BasicParameter<double> g("g", random_tensor(Shape{3, 2}, rng));
  BasicParameter<double> a("a", random_tensor(Shape{3, 4}, rng, 0.0, 1.0));
  BasicParameter<double> b("b", random_tensor(Shape{3, 4}, rng, 0.0, 1.0));
  auto op = [](Tape<double>& t, const std::vector<Var>& v) {
    return mixture(t, softmax(t, v[0]), std::vector<Var>{v[1], v[2]});
  };
  const auto r = testing::finite_difference_check({&g, &a, &b}, op, rng);
  EXPECT_LT(r.max_rel, 1e-6);
}

TEST(Model, GatingOverrideSelectsView) {
  const auto c = small_config(sorting_config(3));
  Model m(c, 1);
  Rng rng(2);
  const auto batch = random_batch(c, 3, rng);
  warm_up(m, batch);
  for (int v = 0; v < 3; ++v) {
    std::vector<double> g(3, 0.0);
    g[static_cast<std::size_t>(v)] = 1.0;
    Tape<float> tape(false);
    const auto vars = m.forward(tape, batch, {BnMode::infer, g});
    for (const auto& p : m.predictions(tape, vars)) {
      EXPECT_EQ(p.gating_state, g);
      for (const auto& h : p.heads) {
        for (std::size_t k = 0; k < h.fused.size(); ++k) {
          EXPECT_NEAR(h.fused[k], h.per_view[static_cast<std::size_t>(v)][k], 1e-6);
        }
      }
    }
  }
}

TEST(Model, InferenceIsPure) {
  const auto c = small_config(sorting_config(2));
  Model m(c, 3);
  Rng rng(4);
  const auto batch = random_batch(c, 4, rng);
  warm_up(m, batch);
  const auto bn_before = m.bn_states().at("view0.state.bn").running_mean.storage();
  auto run = [&] {
    Tape<float> tape(false);
    const auto vars = m.forward(tape, batch, {});
    return m.predictions(tape, vars);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].action.fused, b[i].action.fused);
    EXPECT_EQ(a[i].heads[0].fused, b[i].heads[0].fused);
  }
  EXPECT_EQ(m.bn_states().at("view0.state.bn").running_mean.storage(), bn_before);
}

TEST(Model, JointLossAtUniformOutputs) {
  const auto c = small_config(sorting_config(2));
  Model m(c, 5);
  // Zeroing every output layer makes each head uniform over its 4 classes.
  for (auto& p : m.parameters()) {
    const bool output = p.name.find("_cls.") != std::string::npos && p.name.find(".fc") == std::string::npos;
    if (output) p.value.fill(0.0f);
  }
  Rng rng(6);
  const auto batch = random_batch(c, 3, rng);
  warm_up(m, batch);
  Tape<float> tape(false);
  const auto vars = m.forward(tape, batch, {});
  const BatchLabels labels{{{0, 1, 2}, {3, 2, 1}}, {1, 1, 0}};
  EXPECT_NEAR(tape.value(m.joint_loss(tape, vars, labels))[0], 3 * std::log(4.0), 1e-5);
}

TEST(Model, NoGatingHasNoGateParameters) {
  auto c = small_config(sorting_config(3));
  c.use_gating = false;
  const Model m(c, 1);
  for (const auto& p : m.parameters()) EXPECT_EQ(p.name.rfind("gate_", 0), std::string::npos) << p.name;
  EXPECT_TRUE(Model(small_config(sorting_config(3)), 1).has_parameter("gate_state.out.weight"));
}

TEST(Model, DepthOffTakesThreeChannels) {
  auto c = small_config(sorting_config(1));
  c.use_depth = false;
  Model m(c, 1);
  EXPECT_EQ(m.parameter("view0.state.conv1.kernel").value.dim(2), 3);
  Rng rng(7);
  const auto batch = random_batch(c, 2, rng);
  warm_up(m, batch);
  Tape<float> tape(false);
  EXPECT_NO_THROW(m.forward(tape, batch, {}));
  auto c4 = c;
  c4.use_depth = true;
  const auto wrong = random_batch(c4, 2, rng);
  Tape<float> tape2(false);
  EXPECT_THROW(m.forward(tape2, wrong, {}), ConfigError);
}

TEST(Model, SeedDeterminesWeights) {
  const auto c = small_config(patrolling_config(2));
  const Model a(c, 42), b(c, 42), d(c, 43);
  EXPECT_EQ(a.parameters().front().value.storage(), b.parameters().front().value.storage());
  EXPECT_NE(a.parameters().front().value.storage(), d.parameters().front().value.storage());
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "mvsa_test_ckpt";
  std::filesystem::remove_all(dir);
  const auto c = small_config(patrolling_config(2));
  Model m(c, 11);
  Rng rng(12);
  // Move batch-norm statistics away from their defaults.
  {
    Tape<float> tape(false);
    m.forward(tape, random_batch(c, 3, rng), {BnMode::train});
  }
  save_checkpoint(m, dir, {{"epochs", 3}});
  const auto loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded.model.config(), c);
  EXPECT_EQ(loaded.training.at("epochs"), 3);
  ASSERT_EQ(loaded.model.parameters().size(), m.parameters().size());
  for (const auto& p : m.parameters()) {
    EXPECT_EQ(encode_tensor(loaded.model.parameter(p.name).value), encode_tensor(p.value)) << p.name;
  }
  for (const auto& [name, st] : m.bn_states()) {
    EXPECT_EQ(encode_tensor(loaded.model.bn_states().at(name).running_mean), encode_tensor(st.running_mean));
    EXPECT_EQ(encode_tensor(loaded.model.bn_states().at(name).running_var), encode_tensor(st.running_var));
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsMismatchedManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "mvsa_test_ckpt_bad";
  std::filesystem::remove_all(dir);
  save_checkpoint(Model(small_config(sorting_config(1)), 1), dir);
  auto manifest = nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
  manifest["config"]["filters"] = 5;
  write_file_bytes(dir / "manifest.json", manifest.dump());
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  write_file_bytes(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mvsa
