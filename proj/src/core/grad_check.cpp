#include "mvsa/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvsa {

namespace {

struct Eval {
  double loss;
  std::uint64_t fingerprint;
};

Eval evaluate(const LossBuilder& loss) {
  Tape<double> tape(false);
  tape.set_track_kinks(true);
  const Var l = loss(tape);
  return {tape.value(l)[0], tape.kink_fingerprint()};
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const LossBuilder& loss, const std::vector<BasicParameter<double>*>& params,
                           const GradCheckOptions& options, Rng rng) {
  if (params.empty()) throw ConfigError("grad_check: no parameters");
  for (auto* p : params) p->zero_grad();
  std::uint64_t base_fp = 0;
  {
    Tape<double> tape(true);
    tape.set_track_kinks(true);
    const Var l = loss(tape);
    base_fp = tape.kink_fingerprint();
    tape.backward(l);
  }
  std::vector<BasicTensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  GradCheckResult result;
  std::vector<bool> seen(params.size(), false);
  const double h = options.step;
  for (int probe = 0; probe < options.probes; ++probe) {
    const std::size_t pi = order[static_cast<std::size_t>(probe) % order.size()];
    auto& p = *params[pi];
    for (int attempt = 0;; ++attempt) {
      const auto idx = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(p.value.numel())));
      const double orig = p.value[idx];
      auto at = [&](double offset) {
        p.value[idx] = orig + offset;
        const Eval e = evaluate(loss);
        p.value[idx] = orig;
        return e;
      };
      const Eval far_lo = at(-options.kink_margin * h);
      const Eval far_hi = at(options.kink_margin * h);
      const Eval lo = at(-h);
      const Eval hi = at(h);
      const bool smooth = far_lo.fingerprint == base_fp && far_hi.fingerprint == base_fp &&
                          lo.fingerprint == base_fp && hi.fingerprint == base_fp;
      if (!smooth && attempt < options.max_redraws_per_probe) {
        ++result.redraws;
        continue;
      }
      GradProbe gp;
      gp.parameter = p.name;
      gp.index = idx;
      gp.analytic = analytic[pi][idx];
      gp.numeric = (hi.loss - lo.loss) / (2.0 * h);
      gp.rel_error = relative_error(gp.analytic, gp.numeric, options.denominator_floor);
      if (gp.rel_error >= result.max_rel_error) {
        result.max_rel_error = gp.rel_error;
        result.worst = gp;
      }
      result.probes.push_back(gp);
      if (!seen[pi]) {
        seen[pi] = true;
        result.covered.push_back(p.name);
      }
      break;
    }
  }
  return result;
}

}  // namespace mvsa
