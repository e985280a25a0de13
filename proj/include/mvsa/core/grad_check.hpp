#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvsa/core/rng.hpp"
#include "mvsa/core/tape.hpp"

namespace mvsa {

struct GradCheckOptions {
  int probes = 50;
  double step = 1e-4;
  /// Probes whose +-kink_margin*step neighbourhood crosses a relu/max-pool
  /// kink (detected through the tape's activation fingerprint) are redrawn.
  double kink_margin = 10.0;
  int max_redraws_per_probe = 50;
  /// Smallest denominator of the relative error. Coordinates whose true
  /// gradient is zero give a numeric value of pure roundoff (about
  /// 1e-16 * |loss| / step), which this floor keeps from counting as an error.
  double denominator_floor = 1e-8;
};

struct GradProbe {
  std::string parameter;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  GradProbe worst;
  std::vector<GradProbe> probes;
  int redraws = 0;
  /// Parameter names visited at least once.
  std::vector<std::string> covered;
};

using LossBuilder = std::function<Var(Tape<double>&)>;

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central-difference check of the analytic gradient of `loss` at randomly
/// probed coordinates. Probes are spread round-robin over `params` (in a
/// seeded order) so every parameter tensor is visited once probes >= params.
/// The builder must be deterministic.
GradCheckResult grad_check(const LossBuilder& loss, const std::vector<BasicParameter<double>*>& params,
                           const GradCheckOptions& options, Rng rng);

}  // namespace mvsa
