#pragma once

#include <cmath>
#include <span>

#include "mvsa/core/tape.hpp"

namespace mvsa {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter, then zeroes the grads.
/// Throws NumericError naming the first parameter with a non-finite gradient;
/// in that case no parameter is modified.
template <typename T>
void adam_step(std::span<BasicParameter<T>* const> params, const AdamHyper& hyper = {}) {
  for (const auto* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  for (auto* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      const double m = hyper.beta1 * p->adam_m[i] + (1.0 - hyper.beta1) * g;
      const double v = hyper.beta2 * p->adam_v[i] + (1.0 - hyper.beta2) * g * g;
      p->adam_m[i] = static_cast<T>(m);
      p->adam_v[i] = static_cast<T>(v);
      const double step = hyper.lr * (m / c1) / (std::sqrt(v / c2) + hyper.eps);
      p->value[i] = static_cast<T>(p->value[i] - step);
    }
    p->zero_grad();
  }
}

}  // namespace mvsa
