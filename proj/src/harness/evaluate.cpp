#include "mvsa/harness/evaluate.hpp"

#include <algorithm>
#include <limits>

#include "mvsa/core/error.hpp"
#include "mvsa/harness/batch.hpp"
#include "mvsa/network/decision.hpp"
#include "mvsa/network/masking.hpp"

namespace mvsa {

using nlohmann::json;

Status detector_status(const Dataset& ds, int episode, int t, std::span<const int> views, StatusRule rule,
                       std::vector<Status>* per_view) {
  const auto& step = ds.episodes.at(static_cast<std::size_t>(episode)).steps.at(static_cast<std::size_t>(t));
  std::vector<Status> statuses;
  for (int v : views) {
    const auto& dets = step.detections.at(static_cast<std::size_t>(v));
    // Most confident effector detection; without one only the conveyor rule
    // can apply.
    Point eff{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    double best = -1.0;
    for (const auto& d : dets) {
      if (d.label == ObjectClass::effector && d.confidence >= kMinConfidence && d.confidence > best) {
        best = d.confidence;
        eff = {d.box.cx(), d.box.cy()};
      }
    }
    statuses.push_back(select_target_onion(dets, eff, ds.conveyor_end_x.at(static_cast<std::size_t>(v)),
                                           ds.effector_radius));
  }
  if (per_view != nullptr) *per_view = statuses;
  return rule == StatusRule::consolidate ? consolidate_status(statuses) : majority_status(statuses);
}

std::vector<FusedPrediction> predict(Model& model, const Dataset& ds, std::span<const Sample> samples,
                                     const PredictOptions& options) {
  const MvsaConfig& cfg = model.config();
  const auto views = resolve_views(cfg, ds, options.views);
  if (cfg.domain != ds.spec.domain || cfg.state_heads != ds.schema.state_heads) {
    throw ConfigError("model schema does not match the dataset");
  }
  const StatusRule rule =
      options.status_rule.value_or(cfg.use_gating ? StatusRule::consolidate : StatusRule::majority);
  const auto bs = static_cast<std::size_t>(std::max(1, options.batch_size));
  std::vector<FusedPrediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    const auto part = samples.subspan(start, std::min(bs, samples.size() - start));
    const Batch b = make_batch(ds, part, cfg, views);
    Tape<float> tape(false);
    const auto vars = model.forward(tape, b.input, ForwardOptions{});
    auto preds = model.predictions(tape, vars);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const Sample& s = part[i];
      FusedPrediction& p = preds[i];
      p.expert_id = s.expert;
      if (cfg.domain == Domain::sorting) {
        std::vector<Status> per_view;
        p.status = detector_status(ds, s.episode, s.t, views, rule, &per_view);
        p.view_status = per_view;
      } else {
        const auto& step = ds.episodes[static_cast<std::size_t>(s.episode)].steps[static_cast<std::size_t>(s.t)];
        std::vector<Detection> mine;
        for (int v : views) {
          for (const auto& d : step.detections[static_cast<std::size_t>(v)]) {
            if (d.object_id == s.expert) mine.push_back(d);
          }
        }
        p = unknown_override(std::move(p), mine);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

const HeadMetrics& MetricsReport::head(const std::string& name) const {
  for (const auto& h : heads) {
    if (h.name == name) return h;
  }
  throw ConfigError("report has no head '" + name + "'");
}

namespace {

const ExpertLabel& label_of(const Dataset& ds, const Sample& s) {
  for (const auto& e : ds.episodes.at(static_cast<std::size_t>(s.episode)).steps.at(static_cast<std::size_t>(s.t)).experts) {
    if (e.id == s.expert) return e;
  }
  throw ConfigError("no expert " + std::to_string(s.expert) + " in episode " + std::to_string(s.episode));
}

HeadMetrics make_head(const std::string& name, int width) {
  HeadMetrics h;
  h.name = name;
  h.confusion.assign(static_cast<std::size_t>(width), std::vector<std::int64_t>(static_cast<std::size_t>(width), 0));
  return h;
}

void tally(HeadMetrics& h, int truth, int pred) {
  const auto width = static_cast<int>(h.confusion.size());
  if (truth < 0 || truth >= width || pred < 0 || pred >= width) {
    throw ConfigError("label out of range for head '" + h.name + "'");
  }
  ++h.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
  ++h.total;
  if (truth == pred) ++h.correct;
}

}  // namespace

MetricsReport score(const Dataset& ds, std::span<const Sample> samples, std::span<const FusedPrediction> preds) {
  if (samples.size() != preds.size()) throw ConfigError("score: one prediction per sample required");
  const MvsaConfig& schema = ds.schema;
  MetricsReport r;
  for (const auto& h : schema.state_heads) r.heads.push_back(make_head(h.name, h.width()));
  r.heads.push_back(make_head("action", schema.action_head.width()));
  const bool sorting = schema.domain == Domain::sorting;
  if (sorting) r.heads.push_back(make_head("status", kStatusClasses));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ExpertLabel& truth = label_of(ds, samples[i]);
    const FusedPrediction& p = preds[i];
    for (std::size_t h = 0; h < schema.state_heads.size(); ++h) tally(r.heads[h], truth.heads[h], p.heads.at(h).label);
    tally(r.heads[schema.state_heads.size()], truth.action, p.action.label);
    if (sorting) {
      tally(r.heads.back(), static_cast<int>(truth.status), static_cast<int>(p.status.value_or(Status::unknown)));
    }
  }
  r.samples = static_cast<std::int64_t>(samples.size());
  return r;
}

MetricsReport evaluate(Model& model, const Dataset& ds, std::span<const Sample> samples,
                       const PredictOptions& options) {
  const auto preds = predict(model, ds, samples, options);
  return score(ds, samples, preds);
}

json to_json(const MetricsReport& r) {
  json heads = json::array();
  for (const auto& h : r.heads) {
    heads.push_back({{"name", h.name},
                     {"accuracy", h.accuracy()},
                     {"correct", h.correct},
                     {"n", h.total},
                     {"confusion", h.confusion}});
  }
  return {{"samples", r.samples}, {"heads", heads}};
}

std::vector<TrajectoryStep> to_trajectory(const MvsaConfig& config, std::span<const Sample> samples,
                                          std::span<const FusedPrediction> preds) {
  if (samples.size() != preds.size()) throw ConfigError("to_trajectory: one prediction per sample required");
  std::vector<TrajectoryStep> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    TrajectoryStep s;
    s.episode = samples[i].episode;
    s.t = samples[i].t;
    s.expert_id = samples[i].expert;
    for (const auto& h : preds[i].heads) s.state.push_back(h.label);
    if (s.state.size() != config.state_heads.size()) throw ConfigError("to_trajectory: head count mismatch");
    s.action = preds[i].action.label;
    s.status = preds[i].status;
    s.gating_state = preds[i].gating_state;
    s.gating_action = preds[i].gating_action;
    out.push_back(std::move(s));
  }
  return out;
}

json to_json(const TrajectoryStep& s, const MvsaConfig& config) {
  json state = json::object();
  for (std::size_t h = 0; h < config.state_heads.size(); ++h) state[config.state_heads[h].name] = s.state.at(h);
  json j = {{"episode", s.episode}, {"t", s.t},           {"expert_id", s.expert_id},
            {"state", state},       {"action", s.action}, {"status", nullptr},
            {"gating_state", s.gating_state}, {"gating_action", s.gating_action}};
  if (s.status) j["status"] = to_string(*s.status);
  return j;
}

double trajectory_fidelity(std::span<const TrajectoryStep> emitted, std::span<const ExpertLabel> truth) {
  if (emitted.size() != truth.size()) {
    throw ConfigError("trajectory_fidelity: " + std::to_string(emitted.size()) + " emitted steps vs " +
                      std::to_string(truth.size()) + " ground-truth steps");
  }
  if (emitted.empty()) return 1.0;
  std::size_t match = 0;
  for (std::size_t i = 0; i < emitted.size(); ++i) {
    const auto& e = emitted[i];
    const auto& g = truth[i];
    bool ok = e.state.size() == g.heads.size() && e.action == g.action;
    for (std::size_t h = 0; ok && h < e.state.size(); ++h) ok = e.state[h] == g.heads[h];
    if (ok) ++match;
  }
  return static_cast<double>(match) / static_cast<double>(emitted.size());
}

}  // namespace mvsa
