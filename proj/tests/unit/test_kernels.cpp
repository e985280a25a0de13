#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mvsa/core/ops.hpp"
#include "test_util.hpp"

namespace mvsa {
namespace {

using testing::random_tensor;

// ---- Naive oracles (independent of the im2col/GEMM path).

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t pad_before(std::int64_t in, std::int64_t k, std::int64_t s) {
  const std::int64_t out = ceil_div(in, s);
  const std::int64_t need = (out - 1) * s + k - in;
  return need > 0 ? need / 2 : 0;
}

Tensor64 naive_conv(const Tensor64& x, const Tensor64& k, const Tensor64& b, std::int64_t sh,
                    std::int64_t sw) {
  const auto H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const auto KH = k.dim(0), KW = k.dim(1), CO = k.dim(3);
  const auto OH = ceil_div(H, sh), OW = ceil_div(W, sw);
  const auto pt = pad_before(H, KH, sh), pl = pad_before(W, KW, sw);
  Tensor64 y(Shape{OH, OW, CO});
  for (std::int64_t oy = 0; oy < OH; ++oy)
    for (std::int64_t ox = 0; ox < OW; ++ox)
      for (std::int64_t co = 0; co < CO; ++co) {
        double acc = b[co];
        for (std::int64_t ky = 0; ky < KH; ++ky)
          for (std::int64_t kx = 0; kx < KW; ++kx)
            for (std::int64_t c = 0; c < C; ++c) {
              const auto iy = oy * sh + ky - pt, ix = ox * sw + kx - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x.at(iy, ix, c) * k.at(ky, kx, c, co);
            }
        y.at(oy, ox, co) = acc;
      }
  return y;
}

Tensor64 naive_pool(const Tensor64& x, std::int64_t kh, std::int64_t kw, std::int64_t sh,
                    std::int64_t sw) {
  const auto H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const auto OH = ceil_div(H, sh), OW = ceil_div(W, sw);
  const auto pt = pad_before(H, kh, sh), pl = pad_before(W, kw, sw);
  Tensor64 y(Shape{OH, OW, C});
  for (std::int64_t oy = 0; oy < OH; ++oy)
    for (std::int64_t ox = 0; ox < OW; ++ox)
      for (std::int64_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::int64_t ky = 0; ky < kh; ++ky)
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const auto iy = oy * sh + ky - pt, ix = ox * sw + kx - pl;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            best = std::max(best, x.at(iy, ix, c));
          }
        y.at(oy, ox, c) = best;
      }
  return y;
}

TEST(Conv2d, OneByOneScaling) {
  auto x = Tensor64::from({2, 2, 1}, {1, 2, 3, 4});
  auto k = Tensor64::from({1, 1, 1, 1}, {2});
  auto b = Tensor64::from({1}, {0});
  auto y = conv2d_forward(x, k, b, {1, 1});
  EXPECT_EQ(y, Tensor64::from({2, 2, 1}, {2, 4, 6, 8}));
}

TEST(Conv2d, StateBranchFirstLayerShape) {
  Tensor x(Shape{120, 160, 4}, 0.5f);
  Tensor k(Shape{3, 9, 4, 32}, 0.01f);
  Tensor b(Shape{32});
  EXPECT_EQ(conv2d_forward(x, k, b, {3, 3}).shape(), (Shape{40, 54, 32}));
}

TEST(Conv2d, RandomFiveByFiveMatchesOracle) {
  Rng rng(11);
  auto x = random_tensor(Shape{5, 5, 1}, rng);
  auto k = random_tensor(Shape{3, 3, 1, 1}, rng);
  auto b = random_tensor(Shape{1}, rng);
  auto got = conv2d_forward(x, k, b, {1, 1});
  auto want = naive_conv(x, k, b, 1, 1);
  for (std::int64_t i = 0; i < got.numel(); ++i) {
    EXPECT_NEAR(got[i], want[i], 1e-6 * std::max(1.0, std::abs(want[i])));
  }
}

TEST(Conv2d, ExhaustiveRandomSuiteMatchesOracle) {
  Rng rng(2024);
  int cases = 0;
  for (int trial = 0; trial < 240; ++trial) {
    const int H = rng.uniform_int(1, 8), W = rng.uniform_int(1, 8), C = rng.uniform_int(1, 3);
    const int KH = rng.uniform_int(1, 4), KW = rng.uniform_int(1, 9), CO = rng.uniform_int(1, 3);
    const int sh = rng.uniform_int(1, 3), sw = rng.uniform_int(1, 3);
    auto x = random_tensor(Shape{H, W, C}, rng);
    auto k = random_tensor(Shape{KH, KW, C, CO}, rng);
    auto b = random_tensor(Shape{CO}, rng);
    auto got = conv2d_forward(x, k, b, {sh, sw});
    auto want = naive_conv(x, k, b, sh, sw);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::int64_t i = 0; i < got.numel(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
    ++cases;
  }
  EXPECT_GE(cases, 200);
}

TEST(Conv2d, BatchedEqualsPerImage) {
  Rng rng(5);
  auto x = random_tensor(Shape{3, 6, 7, 2}, rng);
  auto k = random_tensor(Shape{3, 3, 2, 4}, rng);
  auto b = random_tensor(Shape{4}, rng);
  auto y = conv2d_forward(x, k, b, {2, 2});
  for (int n = 0; n < 3; ++n) {
    Tensor64 xn(Shape{6, 7, 2}, std::vector<double>(x.data() + n * 84, x.data() + (n + 1) * 84));
    auto yn = naive_conv(xn, k, b, 2, 2);
    for (std::int64_t i = 0; i < yn.numel(); ++i) EXPECT_NEAR(y[n * yn.numel() + i], yn[i], 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchIsConfigError) {
  Tensor x(Shape{4, 4, 3});
  Tensor k(Shape{3, 3, 4, 8});
  Tensor b(Shape{8});
  EXPECT_THROW(conv2d_forward(x, k, b, {1, 1}), ConfigError);
}

TEST(Conv2d, ZeroExtentIsConfigError) {
  EXPECT_THROW(Tensor(Shape{0, 4, 3}), ConfigError);
  EXPECT_THROW(same_padding(0, 3, 1), ConfigError);
}

TEST(MaxPool, TwoByTwo) {
  auto x = Tensor64::from({2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(maxpool2d_forward(x, {2, 2}, {2, 2}), Tensor64::from({1, 1, 1}, {4}));
}

TEST(MaxPool, StateBranchFirstPoolShape) {
  Tensor x(Shape{40, 54, 32});
  EXPECT_EQ(maxpool2d_forward(x, {4, 4}, {3, 3}).shape(), (Shape{14, 18, 32}));
}

TEST(MaxPool, RandomSixBySixMatchesOracleExactly) {
  Rng rng(3);
  auto x = random_tensor(Shape{6, 6, 1}, rng);
  EXPECT_EQ(maxpool2d_forward(x, {2, 2}, {2, 2}), naive_pool(x, 2, 2, 2, 2));
}

TEST(MaxPool, ExhaustiveRandomSuiteMatchesOracle) {
  Rng rng(77);
  int cases = 0;
  for (int trial = 0; trial < 240; ++trial) {
    const int H = rng.uniform_int(1, 8), W = rng.uniform_int(1, 8), C = rng.uniform_int(1, 3);
    const int kh = rng.uniform_int(1, 4), kw = rng.uniform_int(1, 4);
    const int sh = rng.uniform_int(1, 3), sw = rng.uniform_int(1, 3);
    auto x = random_tensor(Shape{H, W, C}, rng);
    ASSERT_EQ(maxpool2d_forward(x, {kh, kw}, {sh, sw}), naive_pool(x, kh, kw, sh, sw));
    ++cases;
  }
  EXPECT_GE(cases, 200);
}

TEST(SamePadding, OutputIsCeilOfExtentOverStride) {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const int in = rng.uniform_int(1, 64), k = rng.uniform_int(1, 9), s = rng.uniform_int(1, 4);
    EXPECT_EQ(same_padding(in, k, s).out, (in + s - 1) / s);
    Tensor x(Shape{in, 2, 1});
    Tensor kk(Shape{k, 1, 1, 1});
    Tensor b(Shape{1});
    EXPECT_EQ(conv2d_forward(x, kk, b, {s, 1}).dim(0), (in + s - 1) / s);
    EXPECT_EQ(maxpool2d_forward(x, {k, 1}, {s, 1}).dim(0), (in + s - 1) / s);
  }
}

Tensor64 run_unary(Var (*op)(Tape<double>&, Var), Tensor64 x) {
  Tape<double> t(false);
  return t.value(op(t, t.constant(std::move(x))));
}

TEST(Dense, IdentityAndHandArithmetic) {
  Tape<double> t(false);
  auto y1 = dense(t, t.constant(Tensor64::from({2}, {1, 0})),
                  t.constant(Tensor64::from({2, 2}, {1, 0, 0, 1})), t.constant(Tensor64(Shape{2})));
  EXPECT_EQ(t.value(y1), Tensor64::from({2}, {1, 0}));
  auto y2 = dense(t, t.constant(Tensor64::from({2}, {1, 2})),
                  t.constant(Tensor64::from({2, 2}, {1, 3, 2, 4})),
                  t.constant(Tensor64::from({2}, {1, 1})));
  EXPECT_EQ(t.value(y2), Tensor64::from({2}, {6, 12}));
}

TEST(Dense, ExtentMismatchIsConfigError) {
  Tape<double> t(false);
  EXPECT_THROW(dense(t, t.constant(Tensor64(Shape{3})), t.constant(Tensor64(Shape{2, 2})),
                     t.constant(Tensor64(Shape{2}))),
               ConfigError);
}

TEST(Relu, Examples) {
  EXPECT_EQ(run_unary(&relu<double>, Tensor64::from({3}, {-1, 0, 2})), Tensor64::from({3}, {0, 0, 2}));
  EXPECT_EQ(run_unary(&relu<double>, Tensor64::from({2, 2}, {-1, -2, -3, -0.5})), Tensor64(Shape{2, 2}));
}

TEST(Softmax, Examples) {
  auto a = run_unary(&softmax<double>, Tensor64::from({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  auto b = run_unary(&softmax<double>, Tensor64::from({3}, {1000, 1000, 1000}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(b[i], 1.0 / 3.0, 1e-15);
  auto c = run_unary(&softmax<double>, Tensor64::from({2}, {std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(c[0], 0.25, 1e-15);
  EXPECT_NEAR(c[1], 0.75, 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = rng.uniform_int(1, 12);
    auto x = random_tensor(Shape{k}, rng, -20, 20);
    auto y = run_unary(&softmax<double>, x);
    double total = 0;
    for (int i = 0; i < k; ++i) {
      EXPECT_GT(y[i], 0.0);
      total += y[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    const double shift = rng.uniform(-50, 50);
    for (int i = 0; i < k; ++i) x[i] += shift;
    auto y2 = run_unary(&softmax<double>, x);
    for (int i = 0; i < k; ++i) EXPECT_NEAR(y[i], y2[i], 1e-12);
  }
}

Tensor64 bn_train(const Tensor64& x, const Tensor64& gamma, const Tensor64& beta,
                  BatchNormState<double>& st) {
  Tape<double> t(false);
  return t.value(batchnorm(t, t.constant(x), t.constant(gamma), t.constant(beta), st, BnMode::train));
}

TEST(BatchNorm, ConstantInputGivesBeta) {
  BatchNormState<double> st(2);
  Tensor64 x(Shape{4, 2});
  for (int i = 0; i < 4; ++i) x.at(i, 0) = 3.0, x.at(i, 1) = -7.0;
  auto y = bn_train(x, Tensor64::from({2}, {1.5, 2}), Tensor64::from({2}, {0.25, -1}), st);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(y.at(i, 0), 0.25);
    EXPECT_DOUBLE_EQ(y.at(i, 1), -1.0);
  }
}

TEST(BatchNorm, PlusMinusOneBatch) {
  BatchNormState<double> st(1);
  auto y = bn_train(Tensor64::from({2, 1}, {-1, 1}), Tensor64::from({1}, {1}),
                    Tensor64::from({1}, {0}), st);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -s, 1e-12);
  EXPECT_NEAR(y[1], s, 1e-12);
}

TEST(BatchNorm, TrainOutputIsStandardized) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    BatchNormState<double> st(3);
    auto x = random_tensor(Shape{16, 2, 2, 3}, rng, -5, 5);
    auto y = bn_train(x, Tensor64::from({3}, {1, 1, 1}), Tensor64(Shape{3}), st);
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      const int n = 64;
      for (int i = 0; i < n; ++i) m += y[i * 3 + c];
      m /= n;
      for (int i = 0; i < n; ++i) v += (y[i * 3 + c] - m) * (y[i * 3 + c] - m);
      v /= n;
      EXPECT_LT(std::abs(m), 1e-5);
      EXPECT_NEAR(v, 1.0, 1e-3);
    }
  }
}

TEST(BatchNorm, InferBeforeTrainingIsConfigError) {
  BatchNormState<double> st(1);
  Tape<double> t(false);
  EXPECT_THROW(batchnorm(t, t.constant(Tensor64(Shape{2, 1})), t.constant(Tensor64(Shape{1}, 1.0)),
                         t.constant(Tensor64(Shape{1})), st, BnMode::infer),
               ConfigError);
}

TEST(BatchNorm, RunningStatsMoveOnlyInTrainMode) {
  BatchNormState<double> st(1);
  auto x = Tensor64::from({2, 1}, {1, 3});
  bn_train(x, Tensor64::from({1}, {1}), Tensor64::from({1}, {0}), st);
  EXPECT_NEAR(st.running_mean[0], 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(st.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-12);
  const auto before = st.running_mean;
  Tape<double> t(false);
  batchnorm(t, t.constant(x), t.constant(Tensor64(Shape{1}, 1.0)), t.constant(Tensor64(Shape{1})), st,
            BnMode::infer);
  EXPECT_EQ(st.running_mean, before);
}

TEST(Concat, ExamplesAndSliceRoundTrip) {
  Tape<double> t(false);
  auto a = t.constant(Tensor64::from({2}, {1, 2}));
  auto b = t.constant(Tensor64::from({1}, {3}));
  EXPECT_EQ(t.value(concat(t, {a, b}, 0)), Tensor64::from({3}, {1, 2, 3}));
  EXPECT_EQ(t.value(concat(t, {a}, 0)), t.value(a));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = rng.uniform_int(1, 4);
    std::vector<Var> parts;
    std::vector<std::int64_t> widths;
    for (int p = rng.uniform_int(1, 5); p > 0; --p) {
      widths.push_back(rng.uniform_int(1, 6));
      parts.push_back(t.constant(random_tensor(Shape{rows, widths.back()}, rng)));
    }
    auto joined = concat(t, parts, 1);
    std::int64_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      EXPECT_EQ(t.value(slice_last(t, joined, off, widths[p])), t.value(parts[p]));
      off += widths[p];
    }
  }
}

TEST(Concat, ExtentMismatchIsConfigError) {
  Tape<double> t(false);
  EXPECT_THROW(concat(t, {t.constant(Tensor64(Shape{2, 2})), t.constant(Tensor64(Shape{3, 2}))}, 1),
               ConfigError);
}

TEST(Flatten, Examples) {
  Tape<double> t(false);
  EXPECT_EQ(t.value(flatten(t, t.constant(Tensor64::from({2, 2}, {1, 2, 3, 4})))),
            Tensor64::from({4}, {1, 2, 3, 4}));
  Rng rng(1);
  auto v = random_tensor(Shape{1, 1, 32}, rng);
  auto f = t.value(flatten(t, t.constant(v)));
  EXPECT_EQ(f.shape(), Shape{32});
  EXPECT_EQ(f.storage(), v.storage());
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor(Shape{rng.uniform_int(1, 5), rng.uniform_int(1, 5), rng.uniform_int(1, 5)}, rng);
    auto r = reshape(t, flatten(t, t.constant(x)), x.shape());
    EXPECT_EQ(t.value(r), x);
  }
}

TEST(NllLoss, Examples) {
  Tape<double> t(false);
  auto uniform = t.constant(Tensor64(Shape{4}, 0.25));
  for (int target = 0; target < 4; ++target) {
    EXPECT_NEAR(t.value(nll_loss(t, uniform, target))[0], 1.386294, 1e-6);
  }
  EXPECT_NEAR(t.value(nll_loss(t, t.constant(Tensor64::from({3}, {0, 1, 0})), 1))[0], 0.0, 1e-11);
  EXPECT_NEAR(t.value(nll_loss(t, t.constant(Tensor64::from({2}, {0.25, 0.75})), 1))[0], 0.287682, 1e-6);
  EXPECT_THROW(nll_loss(t, uniform, 4), ConfigError);
  EXPECT_THROW(nll_loss(t, uniform, -1), ConfigError);
}

}  // namespace
}  // namespace mvsa
