#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mvsa/core/rng.hpp"
#include "mvsa/network/decision.hpp"

namespace mvsa::oracle {

// Brute-force reading of the target-onion rules. Every eligible onion is
// compared with every other one; the survivor is the one nobody beats.
// Ordering among equally good onions: higher confidence, then lower index.
inline Status target_status(const std::vector<Detection>& dets, double ex, double ey, double end_x,
                            double radius) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto l = dets[i].label;
    if ((l == ObjectClass::blemished || l == ObjectClass::unblemished) && !(dets[i].confidence < 0.5)) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) return Status::unknown;

  auto centre_x = [&](std::size_t i) { return 0.5 * (dets[i].box.x_min + dets[i].box.x_max); };
  auto centre_y = [&](std::size_t i) { return 0.5 * (dets[i].box.y_min + dets[i].box.y_max); };
  auto near = [&](std::size_t i) {
    const double dx = centre_x(i) - ex, dy = centre_y(i) - ey;
    return std::sqrt(dx * dx + dy * dy) < radius;
  };
  auto earlier_or_surer = [&](std::size_t a, std::size_t b) {
    if (dets[a].confidence != dets[b].confidence) return dets[a].confidence > dets[b].confidence;
    return a < b;
  };
  auto to_status = [&](std::size_t i) {
    return dets[i].label == ObjectClass::blemished ? Status::blemished : Status::unblemished;
  };

  std::vector<std::size_t> close;
  for (std::size_t i : eligible) {
    if (near(i)) close.push_back(i);
  }
  if (!close.empty()) {
    for (std::size_t i : close) {
      bool beaten = false;
      for (std::size_t j : close) beaten = beaten || (j != i && earlier_or_surer(j, i));
      if (!beaten) return to_status(i);
    }
  }
  for (std::size_t i : eligible) {
    bool beaten = false;
    const double di = std::fabs(centre_x(i) - end_x);
    for (std::size_t j : eligible) {
      if (j == i) continue;
      const double dj = std::fabs(centre_x(j) - end_x);
      beaten = beaten || dj < di || (dj == di && earlier_or_surer(j, i));
    }
    if (!beaten) return to_status(i);
  }
  return Status::unknown;  // unreachable
}

inline Status consolidated(const std::vector<Status>& views) {
  std::size_t blem = 0, unblem = 0;
  for (Status s : views) {
    blem += s == Status::blemished ? 1 : 0;
    unblem += s == Status::unblemished ? 1 : 0;
  }
  if (blem > 0) return Status::blemished;
  return unblem > 0 ? Status::unblemished : Status::unknown;
}

struct DecisionCase {
  std::vector<Detection> dets;
  double ex = 0, ey = 0, end_x = 0, radius = 40;
};

// Randomized configurations that keep hitting the boundaries: confidences
// exactly 0.5 or just below, onions exactly `radius` away (3-4-5 offsets),
// repeated confidences and equal distances to the conveyor end.
inline DecisionCase random_case(Rng& rng) {
  DecisionCase c;
  // Integer positions keep the exact-radius offsets exact in binary.
  c.ex = static_cast<double>(rng.below(161));
  c.ey = static_cast<double>(rng.below(121));
  c.end_x = rng.bernoulli(0.5) ? 160.0 : static_cast<double>(100 + rng.below(61));
  c.radius = rng.bernoulli(0.7) ? 40.0 : static_cast<double>(5 * (1 + rng.below(12)));
  const int n = static_cast<int>(rng.below(7));
  const double conf_pool[] = {0.5, 0.49999999, 0.5000001, 0.9, 0.9, 0.75, 0.3, 1.0};
  for (int i = 0; i < n; ++i) {
    Detection d;
    const double pick = rng.uniform();
    d.label = pick < 0.4   ? ObjectClass::unblemished
              : pick < 0.8 ? ObjectClass::blemished
              : pick < 0.9 ? ObjectClass::effector
                           : ObjectClass::patroller;
    d.confidence = rng.bernoulli(0.6) ? conf_pool[rng.below(8)] : rng.uniform();
    double cx = 0, cy = 0;
    const double mode = rng.uniform();
    if (mode < 0.3) {  // exactly on the radius (radius is a multiple of 5)
      const double s = c.radius / 5.0;
      const double sx = rng.bernoulli(0.5) ? 1 : -1, sy = rng.bernoulli(0.5) ? 1 : -1;
      cx = c.ex + sx * 3 * s;
      cy = c.ey + sy * 4 * s;
    } else if (mode < 0.5) {  // just inside or outside
      const double r = c.radius + (rng.bernoulli(0.5) ? -1e-6 : 1e-6);
      cx = c.ex + r;
      cy = c.ey;
    } else if (mode < 0.6 && !c.dets.empty()) {  // mirror a previous onion around the end
      const auto& p = c.dets[rng.below(c.dets.size())];
      cx = 2 * c.end_x - 0.5 * (p.box.x_min + p.box.x_max);
      cy = rng.uniform(0, 120);
    } else {
      cx = rng.uniform(0, 160);
      cy = rng.uniform(0, 120);
    }
    const double hw = static_cast<double>(1 + rng.below(8)), hh = static_cast<double>(1 + rng.below(8));
    d.box = {cx - hw, cy - hh, cx + hw, cy + hh};
    c.dets.push_back(d);
  }
  return c;
}

}  // namespace mvsa::oracle
