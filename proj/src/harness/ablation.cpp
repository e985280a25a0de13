#include "mvsa/harness/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mvsa/core/error.hpp"

namespace mvsa {

using nlohmann::json;

namespace {

std::string condition_name(const Corruption& c) {
  std::string views;
  for (std::size_t i = 0; i < c.views.size(); ++i) views += (i ? "+" : "") + std::to_string(c.views[i]);
  std::ostringstream os;
  if (c.kind == CorruptionKind::gaussian_noise) {
    os << "noise:view=" << views << ",sigma=" << c.sigma;
  } else {
    os << "bad_lighting:view=" << views << ",gain=" << c.gain;
  }
  return os.str();
}

Corruption parse_condition(const std::string& s) {
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  std::string args = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (head != "noise" && head != "bad_lighting") throw ConfigError("unknown variant condition '" + s + "'");
  // Same key=value grammar as the corruption spec.
  if (head == "noise" && args.find("sigma=") == std::string::npos) args += ",sigma=0.1";
  if (head == "bad_lighting" && args.find("gain=") == std::string::npos) args += ",gain=3";
  const auto list = parse_corruptions((head == "noise" ? "noise:" : "overexposure:") + args);
  if (list.size() != 1) throw ConfigError("variant condition '" + s + "' must describe one corruption");
  return list[0];
}

}  // namespace

std::string Variant::name() const {
  std::string out;
  switch (kind) {
    case VariantKind::full: out = "full"; break;
    case VariantKind::single_view: out = "single_view:" + std::to_string(view); break;
    case VariantKind::no_gating: out = "no_gating"; break;
    case VariantKind::no_connection: out = "no_connection"; break;
    case VariantKind::no_depth: out = "no_depth"; break;
  }
  for (const auto& c : corruption) out += "@" + condition_name(c);
  return out;
}

Variant parse_variant(const std::string& s) {
  Variant v;
  std::string arch = s;
  const auto at = s.find('@');
  if (at != std::string::npos) {
    arch = s.substr(0, at);
    v.corruption.push_back(parse_condition(s.substr(at + 1)));
  } else if (s.rfind("noise", 0) == 0 || s.rfind("bad_lighting", 0) == 0) {
    v.corruption.push_back(parse_condition(s));
    return v;
  }
  if (arch == "full") return v;
  if (arch == "no_gating" || arch == "multi_view_no_gating") {
    v.kind = VariantKind::no_gating;
    return v;
  }
  if (arch == "no_connection") {
    v.kind = VariantKind::no_connection;
    return v;
  }
  if (arch == "no_depth") {
    v.kind = VariantKind::no_depth;
    return v;
  }
  if (arch.rfind("single_view:", 0) == 0) {
    const std::string rest = arch.substr(12);
    try {
      std::size_t used = 0;
      v.view = std::stoi(rest, &used);
      if (used != rest.size() || v.view < 0) throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("variant '" + s + "': expected single_view:<view>");
    }
    v.kind = VariantKind::single_view;
    return v;
  }
  throw ConfigError("unknown variant '" + s + "'");
}

MvsaConfig variant_config(const MvsaConfig& base, const Variant& v) {
  MvsaConfig c = base;
  switch (v.kind) {
    case VariantKind::single_view:
      if (v.view >= base.num_views) throw ConfigError("variant " + v.name() + ": no such view");
      c.num_views = 1;
      break;
    case VariantKind::no_gating: c.use_gating = false; break;
    case VariantKind::no_connection: c.state_action_connection = false; break;
    case VariantKind::no_depth: c.use_depth = false; break;
    default: break;
  }
  validate(c);
  return c;
}

std::vector<int> variant_views(const MvsaConfig& base, const Variant& v) {
  if (v.kind == VariantKind::single_view) return {v.view};
  std::vector<int> out;
  for (int i = 0; i < base.num_views; ++i) out.push_back(i);
  return out;
}

std::vector<Corruption> variant_corruptions(const Variant& v) { return v.corruption; }

Dataset variant_dataset(const Dataset& clean, const Variant& variant) {
  const auto corruptions = variant_corruptions(variant);
  for (const auto& c : corruptions) {
    for (int v : c.views) {
      if (v < 0 || v >= clean.spec.views) {
        throw ConfigError("variant " + variant.name() + " corrupts view " + std::to_string(v) + ", dataset has " +
                          std::to_string(clean.spec.views));
      }
    }
  }
  Dataset out = clean;
  if (!corruptions.empty()) apply_corruptions(out, corruptions, clean.spec.seed ^ 0x5EEDC0FFEEULL);
  return out;
}

VariantReport run_ablation(const Dataset& clean, const MvsaConfig& base, const Variant& variant,
                           const AblationOptions& options, const FoldHook& hook) {
  const MvsaConfig cfg = variant_config(base, variant);
  const auto views = variant_views(base, variant);
  const auto corruptions = variant_corruptions(variant);
  Dataset corrupted;
  if (!corruptions.empty()) corrupted = variant_dataset(clean, variant);
  const Dataset& train_ds = !corruptions.empty() && options.corrupt_training ? corrupted : clean;
  const Dataset& eval_ds = corruptions.empty() ? clean : corrupted;

  const FoldSplit split = kfold(static_cast<int>(clean.episodes.size()), options.k, options.split_seed);
  std::vector<int> folds = options.folds;
  if (folds.empty()) {
    for (int f = 0; f < options.k; ++f) folds.push_back(f);
  }
  VariantReport report;
  report.variant = variant.name();
  for (int f : folds) {
    const auto train_eps = split.train_episodes(f);
    const auto test_eps = split.test_episodes(f);
    for (int e : test_eps) {
      if (std::binary_search(train_eps.begin(), train_eps.end(), e)) {
        throw ConfigError("fold " + std::to_string(f) + " shares episode " + std::to_string(e));
      }
    }
    const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(f);
    Model model(cfg, seed);
    TrainConfig tc = options.train;
    tc.views = views;
    tc.seed = seed;
    const auto train_samples = build_windows(train_ds, cfg, train_eps).samples;
    const auto result = train(model, train_ds, train_samples, tc);
    const auto test_samples = build_windows(eval_ds, cfg, test_eps, true).samples;
    PredictOptions po;
    po.views = views;
    auto metrics = evaluate(model, eval_ds, test_samples, po);
    report.folds.push_back(f);
    report.seconds.push_back(result.seconds);
    if (hook) hook(f, model, metrics);
    report.reports.push_back(std::move(metrics));
  }
  return report;
}

std::vector<std::string> VariantReport::head_names() const {
  std::vector<std::string> out;
  if (!reports.empty()) {
    for (const auto& h : reports.front().heads) out.push_back(h.name);
  }
  return out;
}

double VariantReport::mean(const std::string& head) const {
  if (reports.empty()) throw ConfigError("variant " + variant + " has no folds");
  double s = 0.0;
  for (const auto& r : reports) s += r.head(head).accuracy();
  return s / static_cast<double>(reports.size());
}

double VariantReport::stddev(const std::string& head) const {
  const double m = mean(head);
  double s = 0.0;
  for (const auto& r : reports) s += (r.head(head).accuracy() - m) * (r.head(head).accuracy() - m);
  return std::sqrt(s / static_cast<double>(reports.size()));
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

std::string reports_csv(const std::vector<VariantReport>& reports) {
  std::string out = "variant,head,fold,accuracy,std,n\n";
  for (const auto& vr : reports) {
    for (const auto& name : vr.head_names()) {
      std::int64_t n = 0;
      for (std::size_t i = 0; i < vr.reports.size(); ++i) {
        const auto& h = vr.reports[i].head(name);
        n += h.total;
        out += vr.variant + "," + name + "," + std::to_string(vr.folds[i]) + "," + pct(h.accuracy()) + ",," +
               std::to_string(h.total) + "\n";
      }
      out += vr.variant + "," + name + ",mean," + pct(vr.mean(name)) + "," + pct(vr.stddev(name)) + "," +
             std::to_string(n) + "\n";
    }
  }
  return out;
}

json to_json(const VariantReport& r) {
  json folds = json::array();
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    json f = to_json(r.reports[i]);
    f["fold"] = r.folds[i];
    folds.push_back(f);
  }
  json agg = json::array();
  for (const auto& name : r.head_names()) {
    agg.push_back({{"head", name}, {"mean", r.mean(name)}, {"std", r.stddev(name)}});
  }
  return {{"variant", r.variant}, {"folds", folds}, {"aggregate", agg}};
}

}  // namespace mvsa
