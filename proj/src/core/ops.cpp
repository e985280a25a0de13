#include "mvsa/core/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace mvsa {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeom {
  std::int64_t n, h, w, c;
  std::int64_t kh, kw, cout;
  std::int64_t oh, ow;
  std::int64_t pad_top, pad_left;
  std::int64_t sh, sw;
  bool batched;

  std::int64_t rows() const { return n * oh * ow; }
  std::int64_t patch() const { return kh * kw * c; }
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// Interprets an image tensor as NHWC.
void image_dims(const Shape& s, std::int64_t& n, std::int64_t& h, std::int64_t& w,
                std::int64_t& c, bool& batched, const char* op) {
  if (s.size() == 3) {
    n = 1, h = s[0], w = s[1], c = s[2];
    batched = false;
  } else if (s.size() == 4) {
    n = s[0], h = s[1], w = s[2], c = s[3];
    batched = true;
  } else {
    throw ConfigError(std::string(op) + ": expected HWC or NHWC input, got " + shape_str(s));
  }
}

ConvGeom conv_geom(const Shape& xs, const Shape& ks, const Shape& bs, Stride2 stride) {
  ConvGeom g{};
  image_dims(xs, g.n, g.h, g.w, g.c, g.batched, "conv2d");
  require(ks.size() == 4, "conv2d: kernel must be [kh,kw,cin,cout], got " + shape_str(ks));
  require(stride.h >= 1 && stride.w >= 1, "conv2d: strides must be >= 1");
  g.kh = ks[0], g.kw = ks[1], g.cout = ks[3];
  require(ks[2] == g.c, "conv2d: kernel expects " + std::to_string(ks[2]) +
                            " input channels, input has " + std::to_string(g.c));
  require(bs.size() == 1 && bs[0] == g.cout, "conv2d: bias must be [cout]");
  g.sh = stride.h, g.sw = stride.w;
  const auto ph = same_padding(g.h, g.kh, g.sh);
  const auto pw = same_padding(g.w, g.kw, g.sw);
  g.oh = ph.out, g.ow = pw.out;
  g.pad_top = ph.pad_before, g.pad_left = pw.pad_before;
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::int64_t patch = g.patch();
  const std::int64_t row_len = g.kw * g.c;
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* img = x + n * g.h * g.w * g.c;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        T* dst = cols + ((n * g.oh + oy) * g.ow + ox) * patch;
        const std::int64_t x0 = ox * g.sw - g.pad_left;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          const std::int64_t iy = oy * g.sh - g.pad_top + ky;
          T* drow = dst + ky * row_len;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + row_len, T{0});
            continue;
          }
          const T* srow = img + iy * g.w * g.c;
          if (x0 >= 0 && x0 + g.kw <= g.w) {
            std::copy(srow + x0 * g.c, srow + (x0 + g.kw) * g.c, drow);
          } else {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
              const std::int64_t ix = x0 + kx;
              T* d = drow + kx * g.c;
              if (ix < 0 || ix >= g.w) {
                std::fill(d, d + g.c, T{0});
              } else {
                std::copy(srow + ix * g.c, srow + (ix + 1) * g.c, d);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  const std::int64_t patch = g.patch();
  for (std::int64_t n = 0; n < g.n; ++n) {
    T* img = dx + n * g.h * g.w * g.c;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        const T* src = cols + ((n * g.oh + oy) * g.ow + ox) * patch;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          const std::int64_t iy = oy * g.sh - g.pad_top + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const std::int64_t ix = ox * g.sw - g.pad_left + kx;
            if (ix < 0 || ix >= g.w) continue;
            const T* s = src + (ky * g.kw + kx) * g.c;
            T* d = img + (iy * g.w + ix) * g.c;
            for (std::int64_t c = 0; c < g.c; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

Shape conv_out_shape(const ConvGeom& g) {
  return g.batched ? Shape{g.n, g.oh, g.ow, g.cout} : Shape{g.oh, g.ow, g.cout};
}

template <typename T>
BasicTensor<T> conv_apply(const BasicTensor<T>& x, const BasicTensor<T>& k,
                          const BasicTensor<T>& b, const ConvGeom& g, AlignedVector<T>& cols) {
  cols.resize(static_cast<std::size_t>(g.rows() * g.patch()));
  im2col(x.data(), g, cols.data());
  BasicTensor<T> y(conv_out_shape(g));
  ConstMatMap<T> c(cols.data(), g.rows(), g.patch());
  ConstMatMap<T> kk(k.data(), g.patch(), g.cout);
  MatMap<T> yy(y.data(), g.rows(), g.cout);
  yy.noalias() = c * kk;
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bb(b.data(), g.cout);
  yy.rowwise() += bb;
  return y;
}

struct PoolGeom {
  std::int64_t n, h, w, c;
  std::int64_t kh, kw, sh, sw;
  std::int64_t oh, ow, pad_top, pad_left;
  bool batched;
};

PoolGeom pool_geom(const Shape& xs, Window2 window, Stride2 stride) {
  PoolGeom g{};
  image_dims(xs, g.n, g.h, g.w, g.c, g.batched, "maxpool2d");
  require(window.h >= 1 && window.w >= 1, "maxpool2d: window must be >= 1");
  require(stride.h >= 1 && stride.w >= 1, "maxpool2d: strides must be >= 1");
  g.kh = window.h, g.kw = window.w, g.sh = stride.h, g.sw = stride.w;
  const auto ph = same_padding(g.h, g.kh, g.sh);
  const auto pw = same_padding(g.w, g.kw, g.sw);
  g.oh = ph.out, g.ow = pw.out, g.pad_top = ph.pad_before, g.pad_left = pw.pad_before;
  return g;
}

// Returns, per output element, the flat input index of the window maximum
// (first in row-major order on ties). Padding acts as -inf.
template <typename T>
BasicTensor<T> pool_apply(const BasicTensor<T>& x, const PoolGeom& g,
                          std::vector<std::int64_t>& argmax) {
  Shape os = g.batched ? Shape{g.n, g.oh, g.ow, g.c} : Shape{g.oh, g.ow, g.c};
  BasicTensor<T> y(os);
  argmax.assign(static_cast<std::size_t>(y.numel()), -1);
  const T* xd = x.data();
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      const std::int64_t y0 = std::max<std::int64_t>(oy * g.sh - g.pad_top, 0);
      const std::int64_t y1 = std::min<std::int64_t>(oy * g.sh - g.pad_top + g.kh, g.h);
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        const std::int64_t x0 = std::max<std::int64_t>(ox * g.sw - g.pad_left, 0);
        const std::int64_t x1 = std::min<std::int64_t>(ox * g.sw - g.pad_left + g.kw, g.w);
        if (y0 >= y1 || x0 >= x1) {
          throw ConfigError("maxpool2d: window covers only padding");
        }
        const std::int64_t out_base = ((n * g.oh + oy) * g.ow + ox) * g.c;
        for (std::int64_t c = 0; c < g.c; ++c) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t iy = y0; iy < y1; ++iy) {
            for (std::int64_t ix = x0; ix < x1; ++ix) {
              const std::int64_t idx = ((n * g.h + iy) * g.w + ix) * g.c + c;
              if (best_idx < 0 || xd[idx] > best) {
                best = xd[idx];
                best_idx = idx;
              }
            }
          }
          y[out_base + c] = best;
          argmax[static_cast<std::size_t>(out_base + c)] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

template <typename T>
Var elementwise_unary(Tape<T>& tape, Var x, T (*fwd)(T),
                      T (*deriv_from_out)(T, T)) {
  const auto& xv = tape.value(x);
  BasicTensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = fwd(xv[i]);
  const std::int32_t self = static_cast<std::int32_t>(tape.size());
  return tape.record(std::move(y), {x}, [x, self, deriv_from_out](Tape<T>& t, const BasicTensor<T>& g) {
    const auto& xin = t.value(x);
    const auto& out = t.value(Var{self});
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv_from_out(xin[i], out[i]);
  });
}

}  // namespace

SamePadding same_padding(std::int64_t in, std::int64_t kernel, std::int64_t stride) {
  if (in <= 0) throw ConfigError("zero-extent input");
  const std::int64_t out = (in + stride - 1) / stride;
  const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                              const BasicTensor<T>& bias, Stride2 stride) {
  const ConvGeom g = conv_geom(x.shape(), kernel.shape(), bias.shape(), stride);
  AlignedVector<T> cols;
  return conv_apply(x, kernel, bias, g, cols);
}

template <typename T>
BasicTensor<T> maxpool2d_forward(const BasicTensor<T>& x, Window2 window, Stride2 stride) {
  std::vector<std::int64_t> argmax;
  return pool_apply(x, pool_geom(x.shape(), window, stride), argmax);
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, Stride2 stride) {
  const ConvGeom g = conv_geom(tape.shape(x), tape.shape(kernel), tape.shape(bias), stride);
  auto cols = std::make_shared<AlignedVector<T>>();
  BasicTensor<T> y = conv_apply(tape.value(x), tape.value(kernel), tape.value(bias), g, *cols);
  if (!tape.requires_grad(kernel)) cols.reset();
  return tape.record(std::move(y), {x, kernel, bias},
                     [g, x, kernel, bias, cols](Tape<T>& t, const BasicTensor<T>& gy) {
                       ConstMatMap<T> dy(gy.data(), g.rows(), g.cout);
                       if (t.requires_grad(kernel)) {
                         ConstMatMap<T> c(cols->data(), g.rows(), g.patch());
                         MatMap<T> dk(t.grad(kernel).data(), g.patch(), g.cout);
                         dk.noalias() += c.transpose() * dy;
                       }
                       if (t.requires_grad(bias)) {
                         Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(
                             t.grad(bias).data(), g.cout);
                         db += dy.colwise().sum();
                       }
                       if (t.requires_grad(x)) {
                         RowMat<T> dcols(g.rows(), g.patch());
                         ConstMatMap<T> kk(t.value(kernel).data(), g.patch(), g.cout);
                         dcols.noalias() = dy * kk.transpose();
                         col2im_add(dcols.data(), g, t.grad(x).data());
                       }
                     });
}

template <typename T>
Var maxpool2d(Tape<T>& tape, Var x, Window2 window, Stride2 stride) {
  const PoolGeom g = pool_geom(tape.shape(x), window, stride);
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  BasicTensor<T> y = pool_apply(tape.value(x), g, *argmax);
  if (tape.tracking_kinks()) {
    for (auto idx : *argmax) tape.fold_kink(static_cast<std::uint64_t>(idx));
  }
  return tape.record(std::move(y), {x}, [x, argmax](Tape<T>& t, const BasicTensor<T>& gy) {
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += gy[static_cast<std::int64_t>(i)];
  });
}

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias) {
  const auto& xs = tape.shape(x);
  const auto& ws = tape.shape(weight);
  require(ws.size() == 2, "dense: weight must be [n,m]");
  require(xs.size() == 1 || xs.size() == 2, "dense: input must be [n] or [N,n]");
  const std::int64_t n_in = xs.back();
  const std::int64_t rows = xs.size() == 2 ? xs[0] : 1;
  require(ws[0] == n_in, "dense: input width " + std::to_string(n_in) +
                             " does not match weight " + shape_str(ws));
  const std::int64_t m = ws[1];
  require(tape.shape(bias) == Shape{m}, "dense: bias must be [m]");
  Shape os = xs.size() == 2 ? Shape{rows, m} : Shape{m};
  BasicTensor<T> y(os);
  {
    ConstMatMap<T> xx(tape.value(x).data(), rows, n_in);
    ConstMatMap<T> ww(tape.value(weight).data(), n_in, m);
    MatMap<T> yy(y.data(), rows, m);
    yy.noalias() = xx * ww;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bb(tape.value(bias).data(), m);
    yy.rowwise() += bb;
  }
  return tape.record(std::move(y), {x, weight, bias},
                     [x, weight, bias, rows, n_in, m](Tape<T>& t, const BasicTensor<T>& gy) {
                       ConstMatMap<T> dy(gy.data(), rows, m);
                       if (t.requires_grad(weight)) {
                         ConstMatMap<T> xx(t.value(x).data(), rows, n_in);
                         MatMap<T> dw(t.grad(weight).data(), n_in, m);
                         dw.noalias() += xx.transpose() * dy;
                       }
                       if (t.requires_grad(bias)) {
                         Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(t.grad(bias).data(), m);
                         db += dy.colwise().sum();
                       }
                       if (t.requires_grad(x)) {
                         ConstMatMap<T> ww(t.value(weight).data(), n_in, m);
                         MatMap<T> dx(t.grad(x).data(), rows, n_in);
                         dx.noalias() += dy * ww.transpose();
                       }
                     });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  BasicTensor<T> y(xv.shape());
  std::uint64_t pattern = 0;
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const bool on = xv[i] > T{0};
    y[i] = on ? xv[i] : T{0};
    if (on) pattern = pattern * 31 + static_cast<std::uint64_t>(i) + 1;
  }
  if (tape.tracking_kinks()) tape.fold_kink(pattern);
  return tape.record(std::move(y), {x}, [x](Tape<T>& t, const BasicTensor<T>& g) {
    const auto& xin = t.value(x);
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      if (xin[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  return elementwise_unary<T>(
      tape, x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var tanh(Tape<T>& tape, Var x) {
  return elementwise_unary<T>(
      tape, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var softmax(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  const std::int64_t k = xv.shape().back();
  const std::int64_t rows = xv.numel() / k;
  BasicTensor<T> y(xv.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * k;
    T* out = y.data() + r * k;
    const T mx = *std::max_element(in, in + k);
    T total{0};
    for (std::int64_t i = 0; i < k; ++i) {
      out[i] = std::exp(in[i] - mx);
      total += out[i];
    }
    for (std::int64_t i = 0; i < k; ++i) out[i] /= total;
  }
  const std::int32_t self = static_cast<std::int32_t>(tape.size());
  return tape.record(std::move(y), {x}, [x, self, k, rows](Tape<T>& t, const BasicTensor<T>& g) {
    const auto& yv = t.value(Var{self});
    auto& gx = t.grad(x);
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* yy = yv.data() + r * k;
      const T* gg = g.data() + r * k;
      T dot{0};
      for (std::int64_t i = 0; i < k; ++i) dot += gg[i] * yy[i];
      T* dx = gx.data() + r * k;
      for (std::int64_t i = 0; i < k; ++i) dx[i] += yy[i] * (gg[i] - dot);
    }
  });
}

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormState<T>& state,
              BnMode mode) {
  const auto& xv = tape.value(x);
  const std::int64_t c = xv.shape().back();
  require(tape.shape(gamma) == Shape{c} && tape.shape(beta) == Shape{c},
          "batchnorm: gamma/beta must be [C]");
  require(state.running_mean.numel() == c, "batchnorm: running statistics have wrong width");
  const std::int64_t m = xv.numel() / c;
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);

  BasicTensor<T> mean(Shape{c}), inv_std(Shape{c});
  if (mode == BnMode::train) {
    std::vector<double> mu(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < c; ++j) mu[j] += xv[i * c + j];
    for (auto& v : mu) v /= static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double d = xv[i * c + j] - mu[j];
        var[j] += d * d;
      }
    for (std::int64_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(m);
      mean[j] = static_cast<T>(mu[j]);
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(var[j] + state.eps));
    }
    {
      // EMA with momentum; unbiased variance for the running estimate.
      const double mom = state.momentum;
      const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
      for (std::int64_t j = 0; j < c; ++j) {
        state.running_mean[j] = static_cast<T>((1 - mom) * state.running_mean[j] + mom * mu[j]);
        state.running_var[j] =
            static_cast<T>((1 - mom) * state.running_var[j] + mom * var[j] * unbias);
      }
      state.initialized = true;
    }
  } else {
    if (!state.initialized) {
      throw ConfigError("batchnorm: inference mode requested before any training update");
    }
    for (std::int64_t j = 0; j < c; ++j) {
      mean[j] = state.running_mean[j];
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[j]) + state.eps));
    }
  }

  auto xhat = std::make_shared<BasicTensor<T>>(xv.shape());
  BasicTensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      const T h = (xv[i * c + j] - mean[j]) * inv_std[j];
      (*xhat)[i * c + j] = h;
      y[i * c + j] = h * gv[j] + bv[j];
    }
  }
  const bool train = mode == BnMode::train;
  return tape.record(std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, m, c, train](Tape<T>& t, const BasicTensor<T>& g) {
                       std::vector<T> sum_g(static_cast<std::size_t>(c), T{0});
                       std::vector<T> sum_gx(static_cast<std::size_t>(c), T{0});
                       for (std::int64_t i = 0; i < m; ++i) {
                         for (std::int64_t j = 0; j < c; ++j) {
                           sum_g[j] += g[i * c + j];
                           sum_gx[j] += g[i * c + j] * (*xhat)[i * c + j];
                         }
                       }
                       if (t.requires_grad(gamma)) {
                         auto& gg = t.grad(gamma);
                         for (std::int64_t j = 0; j < c; ++j) gg[j] += sum_gx[j];
                       }
                       if (t.requires_grad(beta)) {
                         auto& gb = t.grad(beta);
                         for (std::int64_t j = 0; j < c; ++j) gb[j] += sum_g[j];
                       }
                       if (t.requires_grad(x)) {
                         const auto& gv2 = t.value(gamma);
                         auto& gx = t.grad(x);
                         const T mm = static_cast<T>(m);
                         for (std::int64_t i = 0; i < m; ++i) {
                           for (std::int64_t j = 0; j < c; ++j) {
                             const T s = gv2[j] * inv_std[j];
                             if (train) {
                               gx[i * c + j] += s / mm *
                                   (mm * g[i * c + j] - sum_g[j] - (*xhat)[i * c + j] * sum_gx[j]);
                             } else {
                               gx[i * c + j] += s * g[i * c + j];
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts, std::int64_t axis) {
  require(!parts.empty(), "concat: no parts");
  const Shape& s0 = tape.shape(parts[0]);
  const auto rank = static_cast<std::int64_t>(s0.size());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, "concat: axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::int64_t i = axis + 1; i < rank; ++i) inner *= s0[i];
  std::vector<std::int64_t> lens;
  std::int64_t total = 0;
  for (Var p : parts) {
    const Shape& s = tape.shape(p);
    require(static_cast<std::int64_t>(s.size()) == rank, "concat: rank mismatch");
    for (std::int64_t i = 0; i < rank; ++i) {
      require(i == axis || s[i] == s0[i],
              "concat: extent mismatch " + shape_str(s) + " vs " + shape_str(s0));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  BasicTensor<T> y(os);
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = tape.value(parts[p]);
    const std::int64_t chunk = lens[p] * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(pv.data() + o * chunk, pv.data() + (o + 1) * chunk,
                y.data() + o * total * inner + off * inner);
    }
    off += lens[p];
  }
  return tape.record(std::move(y), parts,
                     [parts, lens, outer, inner, total](Tape<T>& t, const BasicTensor<T>& g) {
                       std::int64_t off2 = 0;
                       for (std::size_t p = 0; p < parts.size(); ++p) {
                         const std::int64_t chunk = lens[p] * inner;
                         if (t.requires_grad(parts[p])) {
                           auto& gp = t.grad(parts[p]);
                           for (std::int64_t o = 0; o < outer; ++o) {
                             const T* src = g.data() + o * total * inner + off2 * inner;
                             T* dst = gp.data() + o * chunk;
                             for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
                           }
                         }
                         off2 += lens[p];
                       }
                     });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  BasicTensor<T> y = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(y), {x}, [x](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var flatten(Tape<T>& tape, Var x) {
  return reshape(tape, x, Shape{tape.value(x).numel()});
}

template <typename T>
Var flatten_batch(Tape<T>& tape, Var x) {
  const auto& s = tape.shape(x);
  require(!s.empty(), "flatten_batch: scalar input");
  return reshape(tape, x, Shape{s[0], tape.value(x).numel() / s[0]});
}

template <typename T>
Var gather_rows(Tape<T>& tape, Var x, std::vector<std::int64_t> rows) {
  const auto& xv = tape.value(x);
  require(!rows.empty(), "gather_rows: empty index list");
  const std::int64_t row_len = xv.numel() / xv.dim(0);
  Shape os = xv.shape();
  os[0] = static_cast<std::int64_t>(rows.size());
  BasicTensor<T> y(os);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < xv.dim(0), "gather_rows: index out of range");
    std::copy(xv.data() + rows[i] * row_len, xv.data() + (rows[i] + 1) * row_len,
              y.data() + static_cast<std::int64_t>(i) * row_len);
  }
  return tape.record(std::move(y), {x}, [x, rows = std::move(rows), row_len](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const T* src = g.data() + static_cast<std::int64_t>(i) * row_len;
      T* dst = gx.data() + rows[i] * row_len;
      for (std::int64_t j = 0; j < row_len; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var slice_last(Tape<T>& tape, Var x, std::int64_t begin, std::int64_t len) {
  const auto& xv = tape.value(x);
  const std::int64_t c = xv.shape().back();
  require(begin >= 0 && len >= 1 && begin + len <= c, "slice_last: range out of bounds");
  const std::int64_t rows = xv.numel() / c;
  Shape os = xv.shape();
  os.back() = len;
  BasicTensor<T> y(os);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy(xv.data() + r * c + begin, xv.data() + r * c + begin + len, y.data() + r * len);
  }
  return tape.record(std::move(y), {x}, [x, begin, len, rows, c](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t i = 0; i < len; ++i) gx[r * c + begin + i] += g[r * len + i];
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  require(tape.shape(a) == tape.shape(b), "add: shape mismatch " + shape_str(tape.shape(a)) +
                                              " vs " + shape_str(tape.shape(b)));
  BasicTensor<T> y = tape.value(a);
  add_into(y, tape.value(b));
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const BasicTensor<T>& g) {
    if (t.requires_grad(a)) add_into(t.grad(a), g);
    if (t.requires_grad(b)) add_into(t.grad(b), g);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  require(tape.shape(a) == tape.shape(b), "mul: shape mismatch");
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  BasicTensor<T> y(av.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const BasicTensor<T>& g) {
    if (t.requires_grad(a)) {
      const auto& bv2 = t.value(b);
      auto& ga = t.grad(a);
      for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(b)) {
      const auto& av2 = t.value(a);
      auto& gb = t.grad(b);
      for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

template <typename T>
Var one_minus(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  BasicTensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = T{1} - xv[i];
  return tape.record(std::move(y), {x}, [x](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] -= g[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  T total{0};
  for (std::int64_t i = 0; i < xv.numel(); ++i) total += xv[i];
  return tape.record(BasicTensor<T>(Shape{1}, total), {x}, [x](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  const auto& xv = tape.value(x);
  BasicTensor<T> y(xv.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = xv[i] * factor;
  return tape.record(std::move(y), {x}, [x, factor](Tape<T>& t, const BasicTensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * factor;
  });
}

template <typename T>
Var nll_loss(Tape<T>& tape, Var dist, std::span<const std::int64_t> targets) {
  const auto& dv = tape.value(dist);
  const std::int64_t k = dv.shape().back();
  const std::int64_t rows = dv.numel() / k;
  require(static_cast<std::int64_t>(targets.size()) == rows,
          "nll_loss: expected " + std::to_string(rows) + " targets");
  std::vector<std::int64_t> tg(targets.begin(), targets.end());
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (tg[r] < 0 || tg[r] >= k) {
      throw ConfigError("nll_loss: target " + std::to_string(tg[r]) + " outside [0," +
                        std::to_string(k) + ")");
    }
    total -= std::log(static_cast<double>(dv[r * k + tg[r]]) + kNllFloor);
  }
  const T loss = static_cast<T>(total / static_cast<double>(rows));
  return tape.record(BasicTensor<T>(Shape{1}, loss), {dist},
                     [dist, tg = std::move(tg), k, rows](Tape<T>& t, const BasicTensor<T>& g) {
                       const auto& d = t.value(dist);
                       auto& gd = t.grad(dist);
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const auto idx = r * k + tg[r];
                         gd[idx] -= g[0] / (static_cast<T>(rows) * (d[idx] + static_cast<T>(kNllFloor)));
                       }
                     });
}

template <typename T>
Var mixture(Tape<T>& tape, Var g, const std::vector<Var>& parts) {
  const auto& gs = tape.shape(g);
  require(gs.size() == 2 && gs[1] == static_cast<std::int64_t>(parts.size()),
          "mixture: gating " + shape_str(gs) + " for " + std::to_string(parts.size()) + " parts");
  const std::int64_t rows = gs[0];
  const Shape& ps = tape.shape(parts.at(0));
  require(ps.size() == 2 && ps[0] == rows, "mixture: parts must be [N, k]");
  const std::int64_t k = ps[1];
  const auto views = static_cast<std::int64_t>(parts.size());
  BasicTensor<T> y(Shape{rows, k});
  const auto& gv = tape.value(g);
  for (std::int64_t v = 0; v < views; ++v) {
    require(tape.shape(parts[v]) == ps, "mixture: parts differ in shape");
    const auto& pv = tape.value(parts[v]);
    for (std::int64_t n = 0; n < rows; ++n) {
      const T w = gv[n * views + v];
      for (std::int64_t j = 0; j < k; ++j) y[n * k + j] += w * pv[n * k + j];
    }
  }
  std::vector<Var> inputs = parts;
  inputs.push_back(g);
  return tape.record(std::move(y), inputs, [g, parts, rows, k, views](Tape<T>& t, const BasicTensor<T>& gy) {
    const auto& gv = t.value(g);
    for (std::int64_t v = 0; v < views; ++v) {
      const auto& pv = t.value(parts[v]);
      if (t.requires_grad(g)) {
        auto& gg = t.grad(g);
        for (std::int64_t n = 0; n < rows; ++n) {
          T acc = 0;
          for (std::int64_t j = 0; j < k; ++j) acc += gy[n * k + j] * pv[n * k + j];
          gg[n * views + v] += acc;
        }
      }
      if (t.requires_grad(parts[v])) {
        auto& gp = t.grad(parts[v]);
        for (std::int64_t n = 0; n < rows; ++n) {
          const T w = gv[n * views + v];
          for (std::int64_t j = 0; j < k; ++j) gp[n * k + j] += w * gy[n * k + j];
        }
      }
    }
  });
}

#define MVSA_INSTANTIATE_OPS(T)                                                              \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                         const BasicTensor<T>&, Stride2);                   \
  template BasicTensor<T> maxpool2d_forward(const BasicTensor<T>&, Window2, Stride2);       \
  template Var conv2d(Tape<T>&, Var, Var, Var, Stride2);                                    \
  template Var maxpool2d(Tape<T>&, Var, Window2, Stride2);                                  \
  template Var dense(Tape<T>&, Var, Var, Var);                                              \
  template Var relu(Tape<T>&, Var);                                                         \
  template Var sigmoid(Tape<T>&, Var);                                                      \
  template Var tanh(Tape<T>&, Var);                                                         \
  template Var softmax(Tape<T>&, Var);                                                      \
  template Var batchnorm(Tape<T>&, Var, Var, Var, BatchNormState<T>&, BnMode);              \
  template Var concat(Tape<T>&, const std::vector<Var>&, std::int64_t);                     \
  template Var flatten(Tape<T>&, Var);                                                      \
  template Var flatten_batch(Tape<T>&, Var);                                                \
  template Var reshape(Tape<T>&, Var, Shape);                                               \
  template Var gather_rows(Tape<T>&, Var, std::vector<std::int64_t>);                       \
  template Var slice_last(Tape<T>&, Var, std::int64_t, std::int64_t);                       \
  template Var add(Tape<T>&, Var, Var);                                                     \
  template Var mul(Tape<T>&, Var, Var);                                                     \
  template Var one_minus(Tape<T>&, Var);                                                    \
  template Var sum(Tape<T>&, Var);                                                          \
  template Var scale(Tape<T>&, Var, T);                                                     \
  template Var nll_loss(Tape<T>&, Var, std::span<const std::int64_t>);                      \
  template Var mixture(Tape<T>&, Var, const std::vector<Var>&);

MVSA_INSTANTIATE_OPS(float)
MVSA_INSTANTIATE_OPS(double)

}  // namespace mvsa
