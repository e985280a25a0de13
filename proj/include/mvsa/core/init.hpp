#pragma once

#include <cmath>

#include "mvsa/core/rng.hpp"
#include "mvsa/core/tensor.hpp"

namespace mvsa {

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
BasicTensor<T> fan_in_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace mvsa
