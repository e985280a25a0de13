#include <gtest/gtest.h>

#include "mvsa/core/ops.hpp"
#include "test_util.hpp"

namespace mvsa {
namespace {

using testing::finite_difference_check;
using testing::random_tensor;

BasicParameter<double> rand_param(const char* name, Shape s, Rng& rng, double lo = -1, double hi = 1) {
  return BasicParameter<double>(name, random_tensor(std::move(s), rng, lo, hi));
}

TEST(Backward, SumGivesAllOnes) {
  BasicParameter<double> p("p", Tensor64::from({4}, {1, -2, 3, 0.5}));
  Tape<double> t;
  auto l = sum(t, t.param(p));
  t.backward(l);
  EXPECT_EQ(p.grad, Tensor64(Shape{4}, 1.0));
}

TEST(Backward, RepeatedPassesAccumulate) {
  Rng rng(1);
  auto w = rand_param("w", {3, 2}, rng);
  auto b = rand_param("b", {2}, rng);
  auto x = random_tensor(Shape{3}, rng);
  auto run = [&] {
    Tape<double> t;
    auto y = softmax(t, dense(t, t.constant(x), t.param(w), t.param(b)));
    auto l = nll_loss(t, y, 1);
    t.backward(l);
  };
  run();
  const auto single_w = w.grad;
  const auto single_b = b.grad;
  run();
  for (std::int64_t i = 0; i < w.grad.numel(); ++i) EXPECT_EQ(w.grad[i], 2 * single_w[i]);
  for (std::int64_t i = 0; i < b.grad.numel(); ++i) EXPECT_EQ(b.grad[i], 2 * single_b[i]);
}

TEST(Backward, UnreachableParameterStaysZero) {
  BasicParameter<double> used("used", Tensor64(Shape{2}, 1.0));
  BasicParameter<double> unused("unused", Tensor64(Shape{2}, 1.0));
  Tape<double> t;
  t.param(unused);
  auto l = sum(t, t.param(used));
  t.backward(l);
  EXPECT_EQ(unused.grad, Tensor64(Shape{2}));
}

TEST(Backward, NonScalarIsUsageError) {
  BasicParameter<double> p("p", Tensor64(Shape{2}, 1.0));
  Tape<double> t;
  auto v = t.param(p);
  EXPECT_THROW(t.backward(v), UsageError);
}

TEST(Backward, SecondBackwardIsUsageError) {
  BasicParameter<double> p("p", Tensor64(Shape{2}, 1.0));
  Tape<double> t;
  auto l = sum(t, t.param(p));
  t.backward(l);
  EXPECT_THROW(t.backward(l), UsageError);
  EXPECT_THROW(t.constant(Tensor64(Shape{1})), UsageError);
}

TEST(Backward, TapeIsTopological) {
  Rng rng(2);
  auto w = rand_param("w", {2, 2}, rng);
  Tape<double> t;
  auto x = t.constant(random_tensor(Shape{2}, rng));
  auto a = t.param(w);
  auto y = relu(t, dense(t, x, a, t.constant(Tensor64(Shape{2}))));
  EXPECT_LT(x.id, y.id);
  EXPECT_LT(a.id, y.id);
}

TEST(Gradients, DenseWeightMatchesFiniteDifferences) {
  Rng rng(3);
  auto x = rand_param("x", {2, 5}, rng);
  auto w = rand_param("w", {5, 4}, rng);
  auto b = rand_param("b", {4}, rng);
  auto r = finite_difference_check({&x, &w, &b},
                                   [](Tape<double>& t, const std::vector<Var>& v) {
                                     return dense(t, v[0], v[1], v[2]);
                                   },
                                   rng);
  EXPECT_LT(r.max_rel, 1e-4);
  EXPECT_LT(r.max_abs, 1e-7);
}

TEST(Gradients, ConvMatchesFiniteDifferences) {
  Rng rng(4);
  for (auto stride : {Stride2{1, 1}, Stride2{2, 2}, Stride2{3, 2}}) {
    auto x = rand_param("x", {2, 6, 7, 2}, rng);
    auto k = rand_param("k", {3, 3, 2, 3}, rng);
    auto b = rand_param("b", {3}, rng);
    auto r = finite_difference_check({&x, &k, &b},
                                     [stride](Tape<double>& t, const std::vector<Var>& v) {
                                       return conv2d(t, v[0], v[1], v[2], stride);
                                     },
                                     rng);
    EXPECT_LT(r.max_rel, 1e-4);
    EXPECT_LT(r.max_abs, 1e-7);
  }
}

TEST(Gradients, MaxPoolRoutesToArgmax) {
  Rng rng(5);
  auto x = rand_param("x", {1, 6, 6, 2}, rng);
  auto r = finite_difference_check({&x},
                                   [](Tape<double>& t, const std::vector<Var>& v) {
                                     return maxpool2d(t, v[0], {2, 2}, {2, 2});
                                   },
                                   rng);
  EXPECT_LT(r.max_abs, 1e-7);

  // ties: first element in row-major order receives the gradient
  BasicParameter<double> tie("tie", Tensor64(Shape{2, 2, 1}, 1.0));
  Tape<double> t;
  auto l = sum(t, maxpool2d(t, t.param(tie), {2, 2}, {2, 2}));
  t.backward(l);
  EXPECT_EQ(tie.grad, Tensor64::from({2, 2, 1}, {1, 0, 0, 0}));
}

TEST(Gradients, ReluMaskIsPositiveIndicator) {
  BasicParameter<double> x("x", Tensor64::from({5}, {-2, -0.5, 0.0, 0.7, 3}));
  Tape<double> t;
  auto l = sum(t, relu(t, t.param(x)));
  t.backward(l);
  EXPECT_EQ(x.grad, Tensor64::from({5}, {0, 0, 0, 1, 1}));

  Rng rng(6);
  auto y = rand_param("y", {40}, rng);
  for (std::int64_t i = 0; i < y.value.numel(); ++i) {
    if (std::abs(y.value[i]) < 1e-3) y.value[i] = 0.5;  // keep away from the kink
  }
  auto r = finite_difference_check({&y},
                                   [](Tape<double>& t, const std::vector<Var>& v) { return relu(t, v[0]); },
                                   rng);
  EXPECT_LT(r.max_abs, 1e-8);
}

TEST(Gradients, SmoothOpsMatchFiniteDifferences) {
  Rng rng(7);
  auto a = rand_param("a", {3, 4}, rng);
  auto b = rand_param("b", {3, 4}, rng);
  auto r = finite_difference_check(
      {&a, &b},
      [](Tape<double>& t, const std::vector<Var>& v) {
        auto s = softmax(t, add(t, mul(t, v[0], v[1]), tanh(t, v[1])));
        auto g = sigmoid(t, one_minus(t, v[0]));
        return add(t, scale(t, s, 2.0), g);
      },
      rng);
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST(Gradients, StructuralOpsMatchFiniteDifferences) {
  Rng rng(8);
  auto a = rand_param("a", {3, 2, 2}, rng);
  auto b = rand_param("b", {3, 2, 3}, rng);
  auto r = finite_difference_check(
      {&a, &b},
      [](Tape<double>& t, const std::vector<Var>& v) {
        auto c = concat(t, {v[0], v[1]}, 2);
        auto g = gather_rows(t, c, {2, 0, 2, 1});
        auto s = slice_last(t, g, 1, 3);
        return flatten(t, s);
      },
      rng);
  EXPECT_LT(r.max_abs, 1e-8);
}

TEST(Gradients, BatchNormBothModes) {
  Rng rng(9);
  auto x = rand_param("x", {5, 2, 3}, rng, -2, 2);
  auto gamma = rand_param("gamma", {3}, rng, 0.5, 1.5);
  auto beta = rand_param("beta", {3}, rng);
  for (auto mode : {BnMode::train, BnMode::infer}) {
    BatchNormState<double> st(3);
    st.initialized = true;
    st.running_mean = Tensor64::from({3}, {0.1, -0.2, 0.3});
    st.running_var = Tensor64::from({3}, {1.5, 0.7, 2.0});
    auto r = finite_difference_check(
        {&x, &gamma, &beta},
        [&st, mode](Tape<double>& t, const std::vector<Var>& v) {
          return batchnorm(t, v[0], v[1], v[2], st, mode);
        },
        rng);
    EXPECT_LT(r.max_rel, 1e-4);
    EXPECT_LT(r.max_abs, 1e-7);
  }
}

TEST(Gradients, DenseSoftmaxNllPipeline) {
  Rng rng(10);
  auto w = rand_param("w", {6, 4}, rng);
  auto b = rand_param("b", {4}, rng);
  auto x = random_tensor(Shape{3, 6}, rng);
  const std::vector<std::int64_t> targets{1, 3, 0};
  auto r = finite_difference_check(
      {&w, &b},
      [&](Tape<double>& t, const std::vector<Var>& v) {
        auto p = softmax(t, dense(t, t.constant(x), v[0], v[1]));
        return nll_loss(t, p, std::span<const std::int64_t>(targets));
      },
      rng);
  EXPECT_LT(r.max_rel, 1e-4);
}

}  // namespace
}  // namespace mvsa
