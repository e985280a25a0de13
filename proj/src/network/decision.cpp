#include "mvsa/network/decision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvsa/core/error.hpp"

namespace mvsa {

std::string to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::unblemished: return "unblemished";
    case ObjectClass::blemished: return "blemished";
    case ObjectClass::patroller: return "turtlebot";
    case ObjectClass::effector: return "effector";
  }
  return "?";
}

ObjectClass parse_object_class(const std::string& s) {
  if (s == "unblemished") return ObjectClass::unblemished;
  if (s == "blemished") return ObjectClass::blemished;
  if (s == "turtlebot") return ObjectClass::patroller;
  if (s == "effector") return ObjectClass::effector;
  throw FormatError("unknown detection class '" + s + "'");
}

std::string to_string(Status s) {
  switch (s) {
    case Status::unblemished: return "unblemished";
    case Status::blemished: return "blemished";
    case Status::unknown: return "unknown";
  }
  return "?";
}

Status parse_status(const std::string& s) {
  if (s == "unblemished") return Status::unblemished;
  if (s == "blemished") return Status::blemished;
  if (s == "unknown") return Status::unknown;
  throw FormatError("unknown status '" + s + "'");
}

nlohmann::json to_json(const Detection& d) {
  return {{"label", to_string(d.label)},
          {"confidence", d.confidence},
          {"bbox", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
          {"view", d.view},
          {"object_id", d.object_id}};
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.label = parse_object_class(j.at("label").get<std::string>());
  d.confidence = j.at("confidence").get<double>();
  const auto& b = j.at("bbox");
  d.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
  d.view = j.at("view").get<int>();
  d.object_id = j.value("object_id", 0);
  return d;
}

namespace {

Status status_of(const Detection& d) {
  return d.label == ObjectClass::blemished ? Status::blemished : Status::unblemished;
}

}  // namespace

Status select_target_onion(std::span<const Detection> detections, Point effector, double conveyor_end_x,
                           double effector_radius) {
  std::vector<const Detection*> kept;
  for (const auto& d : detections) {
    const bool onion = d.label == ObjectClass::blemished || d.label == ObjectClass::unblemished;
    if (onion && d.confidence >= kMinConfidence) kept.push_back(&d);
  }
  if (kept.empty()) return Status::unknown;
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Detection* a, const Detection* b) { return a->confidence > b->confidence; });
  for (const Detection* d : kept) {
    if (std::hypot(d->box.cx() - effector.x, d->box.cy() - effector.y) < effector_radius) return status_of(*d);
  }
  const Detection* best = kept.front();
  for (const Detection* d : kept) {
    if (std::abs(d->box.cx() - conveyor_end_x) < std::abs(best->box.cx() - conveyor_end_x)) best = d;
  }
  return status_of(*best);
}

Status consolidate_status(std::span<const Status> per_view) {
  if (per_view.empty()) throw ConfigError("consolidate_status: no views");
  bool any_known = false;
  for (Status s : per_view) {
    if (s == Status::blemished) return Status::blemished;
    any_known = any_known || s == Status::unblemished;
  }
  return any_known ? Status::unblemished : Status::unknown;
}

Status majority_status(std::span<const Status> per_view) {
  int blemished = 0, unblemished = 0;
  for (Status s : per_view) {
    blemished += s == Status::blemished;
    unblemished += s == Status::unblemished;
  }
  if (blemished + unblemished == 0) return Status::unknown;
  return blemished >= unblemished ? Status::blemished : Status::unblemished;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw ConfigError("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

FuseResult fuse(std::span<const double> g, const std::vector<std::vector<double>>& c) {
  if (g.size() != c.size() || c.empty()) {
    throw ConfigError("fuse: " + std::to_string(g.size()) + " gating weights for " + std::to_string(c.size()) +
                      " views");
  }
  FuseResult r;
  r.distribution.assign(c[0].size(), 0.0);
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (c[n].size() != r.distribution.size()) throw ConfigError("fuse: class counts differ between views");
    for (std::size_t k = 0; k < c[n].size(); ++k) r.distribution[k] += g[n] * c[n][k];
  }
  r.label = argmax(r.distribution);
  return r;
}

}  // namespace mvsa
