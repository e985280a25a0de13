#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvsa/core/tape.hpp"
#include "mvsa/core/tensor.hpp"

namespace mvsa {

struct Stride2 {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

struct Window2 {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

/// SAME geometry: out = ceil(in / stride), padding split floor/ceil
/// (before/after) so out-1 strides plus the kernel cover the input.
struct SamePadding {
  std::int64_t out;
  std::int64_t pad_before;
};
SamePadding same_padding(std::int64_t in, std::int64_t kernel, std::int64_t stride);

// ---- Raw kernels (no tape). Images are NHWC; rank-3 HWC is accepted as N=1.

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                              const BasicTensor<T>& bias, Stride2 stride);

template <typename T>
BasicTensor<T> maxpool2d_forward(const BasicTensor<T>& x, Window2 window, Stride2 stride);

// ---- Differentiable ops recorded on a tape.

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, Stride2 stride);

template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, Window2 window, Stride2 stride);

/// y = x.W + b for x of shape [n] or [N, n], W [n, m], b [m].
template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

template <typename T>
Var tanh(Tape<T>& tape, Var x);

/// Softmax over the last axis, max-shifted.
template <typename T>
Var softmax(Tape<T>& tape, Var x);

enum class BnMode { train, infer };

template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  bool initialized = false;  // true once a train-mode update (or a load) happened
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::int64_t channels)
      : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}) {}
};

/// Per-channel normalization over every non-channel position of x [..., C].
template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormState<T>& state,
              BnMode mode);

template <typename T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts, std::int64_t axis);

template <typename T>
Var flatten(Tape<T>& tape, Var x);

/// Keeps axis 0, flattens the rest: [N, ...] -> [N, prod(...)].
template <typename T>
Var flatten_batch(Tape<T>& tape, Var x);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

/// Rows of x along axis 0, in the order given (repeats allowed).
template <typename T>
Var gather_rows(Tape<T>& tape, Var x, std::vector<std::int64_t> rows);

/// x[..., begin:begin+len] along the last axis.
template <typename T>
Var slice_last(Tape<T>& tape, Var x, std::int64_t begin, std::int64_t len);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

/// 1 - x
template <typename T>
Var one_minus(Tape<T>& tape, Var x);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

/// Per-row convex mixture: out[n, :] = sum_v g[n, v] * parts[v][n, :], with
/// g [N, V] and every part [N, k].
template <typename T>
Var mixture(Tape<T>& tape, Var g, const std::vector<Var>& parts);

/// Floor added inside the log of nll_loss.
inline constexpr double kNllFloor = 1e-12;

/// -ln(dist[target] + floor) for dist [k]; for dist [N, k] the mean over rows.
template <typename T>
Var nll_loss(Tape<T>& tape, Var dist, std::span<const std::int64_t> targets);

template <typename T>
Var nll_loss(Tape<T>& tape, Var dist, std::int64_t target) {
  const std::int64_t t[1] = {target};
  return nll_loss(tape, dist, std::span<const std::int64_t>(t, 1));
}

}  // namespace mvsa
