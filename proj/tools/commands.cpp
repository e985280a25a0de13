#include "commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mvsa/cli/run_manifest.hpp"
#include "mvsa/core/error.hpp"
#include "mvsa/core/grad_check.hpp"
#include "mvsa/core/tensor_io.hpp"
#include "mvsa/harness/ablation.hpp"
#include "mvsa/harness/batch.hpp"
#include "mvsa/harness/evaluate.hpp"
#include "mvsa/harness/train.hpp"
#include "mvsa/network/checkpoint.hpp"

namespace mvsa::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated list of integers, got '" + s + "'");
    }
  }
  return out;
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dataset_hash(const fs::path& data) { return fnv1a_hex(read_file_bytes(data / "manifest.json")); }

// Model and training settings shared by train and ablate. The optional
// --config file holds {"model": {...}, "train": {...}}; model keys override the
// dataset's schema and must keep its geometry.
struct RunSettings {
  MvsaConfig base;
  TrainConfig train;
  json resolved;
};

RunSettings resolve_settings(const Dataset& ds, const std::string& config_path, std::optional<int> epochs) {
  RunSettings s;
  s.base = ds.schema;
  json file = json::object();
  if (!config_path.empty()) file = read_json_file(config_path);
  if (file.contains("model")) {
    json merged = to_json(s.base);
    merged.merge_patch(file.at("model"));
    s.base = config_from_json(merged);
    if (s.base.domain != ds.schema.domain || s.base.height != ds.schema.height ||
        s.base.width != ds.schema.width || s.base.num_views != ds.schema.num_views ||
        s.base.state_heads != ds.schema.state_heads || s.base.action_head != ds.schema.action_head) {
      throw ConfigError("model config does not match the dataset schema (domain, views, frame size, heads)");
    }
  }
  if (file.contains("train")) {
    const json& t = file.at("train");
    try {
      s.train.epochs = t.value("epochs", s.train.epochs);
      s.train.batch_size = t.value("batch_size", s.train.batch_size);
      s.train.lr = t.value("lr", s.train.lr);
      s.train.chunk = t.value("chunk", s.train.chunk);
      s.train.bn_recalibration_batches = t.value("bn_recalibration_batches", s.train.bn_recalibration_batches);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("train config: ") + e.what());
    }
  }
  if (epochs) s.train.epochs = *epochs;
  if (s.train.epochs < 0 || s.train.batch_size < 1 || s.train.chunk < 1 || !(s.train.lr > 0)) {
    throw ConfigError("train config: epochs >= 0, batch_size >= 1, chunk >= 1 and lr > 0 required");
  }
  s.resolved = {{"model", to_json(s.base)},
                {"train",
                 {{"epochs", s.train.epochs},
                  {"batch_size", s.train.batch_size},
                  {"lr", s.train.lr},
                  {"chunk", s.train.chunk},
                  {"bn_recalibration_batches", s.train.bn_recalibration_batches}}}};
  return s;
}

json samples_json(const std::vector<Sample>& samples) {
  json out = json::array();
  for (const auto& s : samples) out.push_back({{"episode", s.episode}, {"t", s.t}, {"expert", s.expert}});
  return out;
}

// Wraps one command: fills the run manifest, maps exceptions to exit codes
// and writes the manifest on every path out.
class Runner {
 public:
  Runner(std::string command, const std::vector<std::string>& args, std::ostream& err)
      : err_(err) {
    manifest_.command = std::move(command);
    manifest_.argv = args;
    manifest_.started = utc_timestamp();
  }

  RunManifest& manifest() { return manifest_; }

  int operator()(const fs::path& manifest_path, std::ostream& out, const std::function<void()>& body) {
    int code = kExitOk;
    try {
      body();
      manifest_.status = "ok";
    } catch (const ConfigError& e) {
      code = fail(kExitUsage, e.what());
    } catch (const FormatError& e) {
      code = fail(kExitUsage, e.what());
    } catch (const std::exception& e) {
      code = fail(kExitRuntime, e.what());
    }
    manifest_.finished = utc_timestamp();
    manifest_.exit_code = code;
    try {
      if (manifest_path.empty()) {
        out << manifest_.to_json().dump(2) << "\n";
      } else {
        manifest_.write(manifest_path);
      }
    } catch (const std::exception& e) {
      err_ << "error: could not write run manifest: " << e.what() << "\n";
      if (code == kExitOk) code = kExitRuntime;
    }
    return code;
  }

 private:
  int fail(int code, const std::string& what) {
    manifest_.status = "failed";
    manifest_.error = what;
    err_ << "error: " << what << "\n";
    return code;
  }

  RunManifest manifest_;
  std::ostream& err_;
};

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string domain = "sorting";
  std::optional<int> episodes, views, height, width, steps, jitter;
  std::uint64_t seed = 0;
  std::string corruption;
  std::string out;
  double miss_rate = 0.0;
  double conf_noise = 0.0;
  bool blemish_single_view = false;
  std::optional<double> occlusion_rate;
};

void gen_data(const GenDataArgs& a, RunManifest& m, std::ostream& out) {
  DatasetSpec spec = default_spec(parse_domain(a.domain));
  if (a.episodes) spec.episodes = *a.episodes;
  if (a.views) spec.views = *a.views;
  if (a.height) spec.height = *a.height;
  if (a.width) spec.width = *a.width;
  if (a.steps) spec.steps = *a.steps;
  if (a.jitter) spec.step_jitter = *a.jitter;
  spec.seed = a.seed;
  spec.corruption = parse_corruptions(a.corruption);
  if (!(a.miss_rate >= 0.0 && a.miss_rate < 1.0)) throw ConfigError("--miss-rate must be in [0, 1)");
  if (!(a.conf_noise >= 0.0)) throw ConfigError("--conf-noise must be >= 0");
  spec.miss_rate = a.miss_rate;
  spec.conf_noise = a.conf_noise;
  spec.script.blemish_single_view = a.blemish_single_view;
  if (a.occlusion_rate) {
    if (!(*a.occlusion_rate >= 0.0 && *a.occlusion_rate <= 1.0)) throw ConfigError("--occlusion-rate must be in [0, 1]");
    spec.script.occlusion_rate = *a.occlusion_rate;
  }
  const Dataset ds = generate_dataset(spec);
  write_dataset(ds, a.out);
  const json manifest = dataset_manifest(ds);
  m.seed = a.seed;
  m.config = manifest;
  m.dataset_hash = dataset_hash(a.out);
  m.outputs = {a.out};
  out << "wrote " << ds.episodes.size() << " " << to_string(spec.domain) << " episodes (" << ds.frames()
      << " frames per view, " << spec.views << " views) to " << a.out << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, fold = "0", variant = "full";
  std::uint64_t seed = 0, split_seed = 0;
  int folds = 5;
  std::optional<int> epochs;
};

void train_cmd(const TrainArgs& a, RunManifest& m, std::ostream& out) {
  const Dataset clean = read_dataset(a.data);
  const RunSettings s = resolve_settings(clean, a.config, a.epochs);
  const Variant variant = parse_variant(a.variant);
  const MvsaConfig cfg = variant_config(s.base, variant);
  const auto views = variant_views(s.base, variant);
  const Dataset ds = variant_dataset(clean, variant);
  const FoldSplit split = kfold(static_cast<int>(ds.episodes.size()), a.folds, a.split_seed);
  std::vector<int> folds;
  if (a.fold == "all") {
    for (int f = 0; f < a.folds; ++f) folds.push_back(f);
  } else {
    folds = parse_int_list(a.fold);
    if (folds.empty()) throw ConfigError("--fold needs a fold index or 'all'");
    for (int f : folds) {
      if (f < 0 || f >= a.folds) throw ConfigError("--fold " + std::to_string(f) + " outside 0.." + std::to_string(a.folds - 1));
    }
  }
  m.seed = a.seed;
  m.config = s.resolved;
  m.config["variant"] = variant.name();
  m.config["folds"] = a.folds;
  m.config["split_seed"] = a.split_seed;
  m.dataset_hash = dataset_hash(a.data);
  m.extra["final_loss"] = json::object();
  fs::create_directories(a.out);
  json split_json = json::array();
  for (const auto& f : split.folds) split_json.push_back(f);
  write_file_bytes(fs::path(a.out) / "split.json",
                   json{{"format", "mvsa-split"}, {"format_version", 1}, {"k", a.folds}, {"seed", a.split_seed},
                        {"folds", split_json}}
                           .dump(2) + "\n");

  for (int f : folds) {
    const fs::path dir = fs::path(a.out) / ("fold" + std::to_string(f));
    const auto train_eps = split.train_episodes(f);
    const auto test_eps = split.test_episodes(f);
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(f);
    TrainConfig tc = s.train;
    tc.views = views;
    tc.seed = seed;
    Model model(cfg, seed);
    const auto samples = build_windows(ds, cfg, train_eps).samples;
    json training = {{"fold", f},
                     {"k", a.folds},
                     {"split_seed", a.split_seed},
                     {"seed", seed},
                     {"variant", variant.name()},
                     {"views", views},
                     {"train_episodes", train_eps},
                     {"test_episodes", test_eps},
                     {"dataset_hash", m.dataset_hash},
                     {"train", s.resolved.at("train")}};
    TrainResult result;
    try {
      result = train(model, ds, samples, tc, [&](const EpochStats& st) {
        out << "fold " << f << " epoch " << st.epoch + 1 << "/" << tc.epochs << " loss " << st.mean_loss << "\n";
      });
    } catch (const TrainingAborted& e) {
      // The model still holds the weights from before the offending batch.
      const fs::path dump = dir / "aborted";
      training["aborted_epoch"] = e.epoch();
      save_checkpoint(model, dump / "checkpoint", training);
      const json batch = {{"format", "mvsa-batch"}, {"format_version", 1}, {"epoch", e.epoch()},
                          {"samples", samples_json(e.batch())}};
      write_file_bytes(dump / "batch.json", batch.dump(2) + "\n");
      m.outputs.push_back(dump.string());
      throw;
    }
    training["loss_history"] = result.loss_history;
    training["steps"] = result.steps;
    save_checkpoint(model, dir / "checkpoint", training);
    write_file_bytes(dir / "history.json",
                     json{{"format", "mvsa-history"}, {"format_version", 1}, {"loss_history", result.loss_history},
                          {"steps", result.steps}}
                         .dump(2) + "\n");
    m.outputs.push_back((dir / "checkpoint").string());
    const double final_loss = result.loss_history.empty() ? std::nan("") : result.loss_history.back();
    m.extra["final_loss"][std::to_string(f)] = result.loss_history.empty() ? json(nullptr) : json(final_loss);
    out << "fold " << f << " done: " << samples.size() << " training windows, final loss " << final_loss
        << ", checkpoint " << (dir / "checkpoint").string() << "\n";
  }
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data, out, episodes;
};

struct LoadedRun {
  LoadedCheckpoint ckpt;
  Variant variant;
  std::vector<int> views;
  int fold = 0;
  std::vector<int> test_episodes;
};

LoadedRun load_run(const std::string& path, const Dataset& ds) {
  LoadedRun r{load_checkpoint(path), {}, {}, 0, {}};
  const json& t = r.ckpt.training;
  r.variant = parse_variant(t.value("variant", std::string("full")));
  r.fold = t.value("fold", 0);
  if (t.contains("views")) r.views = t.at("views").get<std::vector<int>>();
  if (t.contains("test_episodes")) r.test_episodes = t.at("test_episodes").get<std::vector<int>>();
  const MvsaConfig& c = r.ckpt.model.config();
  if (c.domain != ds.schema.domain || c.height != ds.schema.height || c.width != ds.schema.width ||
      c.state_heads != ds.schema.state_heads || c.action_head != ds.schema.action_head) {
    throw ConfigError("checkpoint " + path + " does not match the dataset schema");
  }
  resolve_views(c, ds, r.views);
  return r;
}

std::vector<int> episodes_for(const std::string& flag, const LoadedRun& run, const Dataset& ds) {
  std::vector<int> eps = flag.empty() ? run.test_episodes : parse_int_list(flag);
  if (eps.empty()) {
    for (int k = 0; k < static_cast<int>(ds.episodes.size()); ++k) eps.push_back(k);
  }
  for (int k : eps) {
    if (k < 0 || k >= static_cast<int>(ds.episodes.size())) throw ConfigError("no episode " + std::to_string(k));
  }
  return eps;
}

void eval_cmd(const EvalArgs& a, RunManifest& m, std::ostream& out) {
  const Dataset clean = read_dataset(a.data);
  m.dataset_hash = dataset_hash(a.data);
  std::vector<VariantReport> reports;
  std::map<std::string, std::size_t> by_variant;
  json per_checkpoint = json::array();
  for (const auto& path : a.checkpoints) {
    LoadedRun run = load_run(path, clean);
    const Dataset ds = variant_dataset(clean, run.variant);
    const auto eps = episodes_for(a.episodes, run, ds);
    const auto samples = build_windows(ds, run.ckpt.model.config(), eps, true).samples;
    PredictOptions po;
    po.views = run.views;
    const MetricsReport rep = evaluate(run.ckpt.model, ds, samples, po);
    const std::string name = run.variant.name();
    auto it = by_variant.find(name);
    if (it == by_variant.end()) {
      it = by_variant.emplace(name, reports.size()).first;
      reports.push_back(VariantReport{name, {}, {}, {}});
    }
    reports[it->second].folds.push_back(run.fold);
    reports[it->second].reports.push_back(rep);
    reports[it->second].seconds.push_back(0.0);
    per_checkpoint.push_back({{"checkpoint", path}, {"variant", name}, {"fold", run.fold}, {"episodes", eps},
                              {"report", to_json(rep)}});
    out << path << " (" << name << ", fold " << run.fold << ", " << rep.samples << " samples):";
    for (const auto& h : rep.heads) out << " " << h.name << " " << pct(h.accuracy());
    out << "\n";
  }
  fs::create_directories(a.out);
  write_file_bytes(fs::path(a.out) / "metrics.csv", reports_csv(reports));
  write_file_bytes(fs::path(a.out) / "metrics.json",
                   json{{"format", "mvsa-metrics"}, {"format_version", 1}, {"runs", per_checkpoint}}.dump(2) + "\n");
  m.config = {{"checkpoints", a.checkpoints}, {"episodes", a.episodes}};
  m.outputs = {(fs::path(a.out) / "metrics.csv").string(), (fs::path(a.out) / "metrics.json").string()};
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string data, config, out, fold_list;
  std::vector<std::string> variants;
  int folds = 5;
  std::uint64_t seed = 0, split_seed = 0;
  std::optional<int> epochs;
  bool eval_only_corruption = false;
};

std::string comparison_table(const std::vector<VariantReport>& reports, bool markdown) {
  std::vector<std::string> heads;
  for (const auto& r : reports) {
    for (const auto& h : r.head_names()) {
      if (std::find(heads.begin(), heads.end(), h) == heads.end()) heads.push_back(h);
    }
  }
  std::ostringstream os;
  const char* sep = markdown ? " | " : ",";
  if (markdown) os << "| ";
  os << "variant";
  for (const auto& h : heads) os << sep << h;
  if (markdown) {
    os << " |\n|---";
    for (std::size_t i = 0; i < heads.size(); ++i) os << "|---";
    os << "|";
  }
  os << "\n";
  for (const auto& r : reports) {
    if (markdown) os << "| ";
    os << r.variant;
    for (const auto& h : heads) {
      const auto names = r.head_names();
      os << sep;
      if (std::find(names.begin(), names.end(), h) == names.end()) {
        os << "-";
      } else {
        os << pct(r.mean(h)) << (markdown ? " ± " : " +- ") << pct(r.stddev(h));
      }
    }
    if (markdown) os << " |";
    os << "\n";
  }
  return os.str();
}

void ablate_cmd(const AblateArgs& a, RunManifest& m, std::ostream& out) {
  const Dataset ds = read_dataset(a.data);
  const RunSettings s = resolve_settings(ds, a.config, a.epochs);
  std::vector<Variant> variants;
  if (a.variants.empty()) {
    variants.push_back(parse_variant("full"));
    variants.push_back(parse_variant("no_gating"));
    for (int v = 0; v < s.base.num_views; ++v) variants.push_back(parse_variant("single_view:" + std::to_string(v)));
  } else {
    for (const auto& v : a.variants) variants.push_back(parse_variant(v));
  }
  for (const auto& v : variants) {
    variant_config(s.base, v);
    variant_views(s.base, v);
  }
  AblationOptions opt;
  opt.train = s.train;
  opt.k = a.folds;
  opt.split_seed = a.split_seed;
  opt.base_seed = a.seed;
  opt.folds = parse_int_list(a.fold_list);
  opt.corrupt_training = !a.eval_only_corruption;
  m.seed = a.seed;
  m.config = s.resolved;
  m.config["folds"] = a.folds;
  m.config["split_seed"] = a.split_seed;
  m.config["fold_list"] = opt.folds;
  m.config["corrupt_training"] = opt.corrupt_training;
  json names = json::array();
  for (const auto& v : variants) names.push_back(v.name());
  m.config["variants"] = names;
  m.dataset_hash = dataset_hash(a.data);

  std::vector<VariantReport> reports;
  json all = json::array();
  for (const auto& v : variants) {
    out << "variant " << v.name() << "\n";
    auto rep = run_ablation(ds, s.base, v, opt, [&](int fold, Model&, const MetricsReport& r) {
      out << "  fold " << fold << ":";
      for (const auto& h : r.heads) out << " " << h.name << " " << pct(h.accuracy());
      out << "\n";
    });
    all.push_back(to_json(rep));
    reports.push_back(std::move(rep));
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_file_bytes(dir / "reports.csv", reports_csv(reports));
  write_file_bytes(dir / "reports.json",
                   json{{"format", "mvsa-ablation"}, {"format_version", 1}, {"variants", all}}.dump(2) + "\n");
  write_file_bytes(dir / "comparison.csv", comparison_table(reports, false));
  write_file_bytes(dir / "comparison.md", comparison_table(reports, true));
  out << comparison_table(reports, true);
  for (const char* f : {"reports.csv", "reports.json", "comparison.csv", "comparison.md"}) {
    m.outputs.push_back((dir / f).string());
  }
}

// ---- trajgen --------------------------------------------------------------

struct TrajArgs {
  std::string checkpoint, data, out, episodes;
};

void trajgen_cmd(const TrajArgs& a, RunManifest& m, std::ostream& out) {
  const Dataset clean = read_dataset(a.data);
  m.dataset_hash = dataset_hash(a.data);
  LoadedRun run = load_run(a.checkpoint, clean);
  const Dataset ds = variant_dataset(clean, run.variant);
  const auto eps = episodes_for(a.episodes, run, ds);
  const MvsaConfig& cfg = run.ckpt.model.config();
  const fs::path dir(a.out);
  fs::create_directories(dir);
  json summary = json::array();
  double total = 0.0;
  int scored = 0;
  for (int k : eps) {
    const auto samples = build_windows(ds, cfg, {k}, true).samples;
    PredictOptions po;
    po.views = run.views;
    const auto preds = predict(run.ckpt.model, ds, samples, po);
    const auto steps = to_trajectory(cfg, samples, preds);
    std::string lines;
    for (const auto& st : steps) lines += to_json(st, cfg).dump() + "\n";
    char name[32];
    std::snprintf(name, sizeof name, "episode_%03d.jsonl", k);
    write_file_bytes(dir / name, lines);
    m.outputs.push_back((dir / name).string());

    std::vector<ExpertLabel> truth;
    bool have_truth = true;
    for (const auto& s : samples) {
      const auto& experts = ds.episodes[static_cast<std::size_t>(k)].steps[static_cast<std::size_t>(s.t)].experts;
      if (s.expert < 0 || s.expert >= static_cast<int>(experts.size())) {
        have_truth = false;
        break;
      }
      truth.push_back(experts[static_cast<std::size_t>(s.expert)]);
    }
    json entry = {{"episode", k}, {"records", steps.size()}, {"file", name}};
    if (have_truth) {
      const double fid = trajectory_fidelity(steps, truth);
      entry["fidelity"] = fid;
      total += fid;
      ++scored;
      out << "episode " << k << ": " << steps.size() << " records, fidelity " << pct(100.0 * fid) << "%\n";
    } else {
      out << "episode " << k << ": " << steps.size() << " records, no ground truth\n";
    }
    summary.push_back(entry);
  }
  json fidelity = {{"format", "mvsa-fidelity"}, {"format_version", 1}, {"episodes", summary}};
  if (scored > 0) {
    fidelity["mean"] = total / scored;
    out << "mean fidelity " << pct(100.0 * total / scored) << "%\n";
  }
  write_file_bytes(dir / "fidelity.json", fidelity.dump(2) + "\n");
  m.outputs.push_back((dir / "fidelity.json").string());
  m.config = {{"checkpoint", a.checkpoint}, {"episodes", eps}};
}

// ---- grad-check -----------------------------------------------------------

struct GradArgs {
  std::string module = "full";
  int probes = 200;
  std::uint64_t seed = 0;
  std::string out;
};

// Small sorting model in f64 with a 3-sample batch over 7 frames, so the
// unrolled 5-step action window, batch norm in train mode and both gating
// networks all sit on the gradient path.
struct GradProblem {
  BasicModel<double> model;
  BatchInput<double> batch;
  BatchLabels labels;
};

GradProblem grad_problem(std::uint64_t seed) {
  MvsaConfig c = sorting_config(3);
  c.height = 20;
  c.width = 24;
  c.filters = 4;
  c.hidden1 = 12;
  c.hidden2 = 8;
  GradProblem p{Model(c, seed).cast<double>(), {}, {}};
  Rng rng = Rng(seed).split(1);
  // Zero-initialized biases put many pre-activations exactly on a ReLU kink
  // at this input size; random offsets move the probe point off them.
  for (auto& q : p.model.parameters()) {
    const bool bias = q.name.ends_with(".bias") || q.name.ends_with(".beta");
    const bool gamma = q.name.ends_with(".gamma");
    for (std::int64_t i = 0; i < q.value.numel(); ++i) {
      if (bias) q.value[i] = rng.uniform(-0.2, 0.2);
      if (gamma) q.value[i] = rng.uniform(0.5, 1.5);
    }
  }
  const std::int64_t n = 3;
  for (int v = 0; v < c.num_views; ++v) {
    Tensor64 frames(Shape{n + 4, c.height, c.width, c.channels()});
    for (std::int64_t i = 0; i < frames.numel(); ++i) frames[i] = rng.uniform();
    p.batch.frames.push_back(std::move(frames));
  }
  for (std::int64_t i = 0; i < n; ++i) {
    p.batch.state_index.push_back(i + 4);
    p.batch.window_index.push_back({i, i + 1, i + 2, i + 3, i + 4});
  }
  p.labels.heads.assign(c.state_heads.size(), {});
  for (std::size_t h = 0; h < c.state_heads.size(); ++h) {
    for (std::int64_t i = 0; i < n; ++i) p.labels.heads[h].push_back(static_cast<std::int64_t>(rng.below(4)));
  }
  for (std::int64_t i = 0; i < n; ++i) p.labels.action.push_back(static_cast<std::int64_t>(rng.below(4)));
  return p;
}

void grad_check_cmd(const GradArgs& a, RunManifest& m, std::ostream& out, bool& passed) {
  if (a.probes < 1) throw ConfigError("--probes must be >= 1");
  m.seed = a.seed;
  m.config = {{"module", a.module}, {"probes", a.probes}};
  GradCheckOptions opt;
  opt.probes = a.probes;
  GradCheckResult r;
  std::size_t groups = 0;
  if (a.module == "core") {
    // Dense and convolution layers are linear in their weights, so central
    // differences are exact up to rounding.
    Rng rng = Rng(a.seed).split(2);
    auto rnd = [&](Shape s) {
      Tensor64 t(std::move(s));
      for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1, 1);
      return t;
    };
    BasicParameter<double> w("dense.weight", rnd({6, 5})), b("dense.bias", rnd({5}));
    BasicParameter<double> k("conv.kernel", rnd({3, 3, 2, 4})), kb("conv.bias", rnd({4}));
    const Tensor64 x = rnd({4, 6}), img = rnd({2, 7, 9, 2});
    const Tensor64 p1 = rnd({4, 5}), p2 = rnd({2, 4, 5, 4});
    auto loss = [&](Tape<double>& t) {
      const Var d = dense(t, t.constant(x), t.param(w), t.param(b));
      const Var c = conv2d(t, t.constant(img), t.param(k), t.param(kb), Stride2{2, 2});
      return add(t, sum(t, mul(t, d, t.constant(p1))), sum(t, mul(t, c, t.constant(p2))));
    };
    r = grad_check(loss, {&w, &b, &k, &kb}, opt, Rng(a.seed).split(3));
    groups = 4;
  } else if (a.module == "state" || a.module == "action" || a.module == "full") {
    GradProblem p = grad_problem(a.seed);
    std::vector<BasicParameter<double>*> params;
    for (auto* q : p.model.parameter_ptrs()) {
      const bool state = q->name.find("state") != std::string::npos;
      const bool action = q->name.find("action") != std::string::npos;
      if (a.module == "full" || (a.module == "state" && state) || (a.module == "action" && action)) {
        params.push_back(q);
      }
    }
    auto loss = [&](Tape<double>& t) {
      ForwardOptions fo;
      fo.mode = BnMode::train;
      const ForwardVars vars = p.model.forward(t, p.batch, fo);
      if (a.module == "full") return p.model.joint_loss(t, vars, p.labels);
      if (a.module == "action") return nll_loss(t, vars.action_fused, std::span<const std::int64_t>(p.labels.action));
      Var total = nll_loss(t, vars.head_fused[0], std::span<const std::int64_t>(p.labels.heads[0]));
      for (std::size_t h = 1; h < vars.head_fused.size(); ++h) {
        total = add(t, total, nll_loss(t, vars.head_fused[h], std::span<const std::int64_t>(p.labels.heads[h])));
      }
      return total;
    };
    // Losses here are O(1), so roundoff of a zero gradient reaches ~1e-11.
    opt.denominator_floor = 1e-6;
    r = grad_check(loss, params, opt, Rng(a.seed).split(3));
    groups = params.size();
  } else {
    throw ConfigError("--module must be core, state, action or full");
  }
  passed = r.max_rel_error < 1e-4;
  char line[512];
  std::snprintf(line, sizeof line,
                "grad-check %s: %zu probes over %zu/%zu parameter tensors, %d redraws, max relative error %.3e\n"
                "worst: %s[%lld] analytic %.12e numeric %.12e\n",
                a.module.c_str(), r.probes.size(), r.covered.size(), groups, r.redraws, r.max_rel_error,
                r.worst.parameter.c_str(), static_cast<long long>(r.worst.index), r.worst.analytic, r.worst.numeric);
  out << line << (passed ? "PASS" : "FAIL") << "\n";
  m.extra = {{"max_rel_error", r.max_rel_error},
             {"probes", r.probes.size()},
             {"redraws", r.redraws},
             {"covered", r.covered.size()},
             {"parameter_tensors", groups},
             {"worst", {{"parameter", r.worst.parameter}, {"index", r.worst.index}, {"analytic", r.worst.analytic},
                        {"numeric", r.worst.numeric}}},
             {"passed", passed}};
  if (!passed) throw NumericError("gradient check failed: max relative error " + std::to_string(r.max_rel_error));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view state-action recognition: data generation, training, evaluation"};
  app.name("mvsa");
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-view dataset");
  gen->add_option("--domain", g.domain, "sorting or patrolling")->check(CLI::IsMember({"sorting", "patrolling"}));
  gen->add_option("--episodes", g.episodes, "Number of episodes (default 75 sorting, 50 patrolling)");
  gen->add_option("--seed", g.seed, "Dataset seed");
  gen->add_option("--views", g.views, "Camera views (default 3 sorting, 2 patrolling)");
  gen->add_option("--corruption", g.corruption, "e.g. noise:view=0,sigma=0.05;overexposure:view=1,gain=3");
  gen->add_option("--out", g.out, "Output directory")->required();
  gen->add_option("--height", g.height, "Frame height in pixels (default 120)");
  gen->add_option("--width", g.width, "Frame width in pixels (default 160)");
  gen->add_option("--steps", g.steps, "Mean episode length (default 40 sorting, 100 patrolling)");
  gen->add_option("--step-jitter", g.jitter, "Episode length jitter (default 5 sorting, 0 patrolling)");
  gen->add_option("--miss-rate", g.miss_rate, "Detector miss probability per object");
  gen->add_option("--conf-noise", g.conf_noise, "Detector confidence noise");
  gen->add_flag("--blemish-single-view", g.blemish_single_view, "Every blemish is visible from exactly one view");
  gen->add_option("--occlusion-rate", g.occlusion_rate, "Chance per view and step that a passer-by enters (sorting)");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train one fold (or all folds) of a dataset");
  tr->add_option("--data", t.data, "Dataset directory")->required();
  tr->add_option("--config", t.config, "JSON file with \"model\" and \"train\" overrides");
  tr->add_option("--fold", t.fold, "Fold index, comma list, or 'all'");
  tr->add_option("--folds", t.folds, "Number of cross-validation folds")->check(CLI::Range(2, 1000));
  tr->add_option("--seed", t.seed, "Training seed; fold f uses seed + f");
  tr->add_option("--split-seed", t.split_seed, "Seed of the episode split");
  tr->add_option("--epochs", t.epochs, "Override the number of epochs");
  tr->add_option("--variant", t.variant, "Architecture variant, e.g. single_view:0 or full@noise:view=0");
  tr->add_option("--out", t.out, "Output directory")->required();

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on a dataset");
  ev->add_option("--checkpoint", e.checkpoints, "Checkpoint directory (repeatable)")->required();
  ev->add_option("--data", e.data, "Dataset directory")->required();
  ev->add_option("--episodes", e.episodes, "Comma list of episodes (default: the checkpoint's test fold)");
  ev->add_option("--out", e.out, "Output directory")->required();

  AblateArgs ab;
  auto* abl = app.add_subcommand("ablate", "Cross-validate a list of variants and tabulate them");
  abl->add_option("--data", ab.data, "Dataset directory")->required();
  abl->add_option("--variant", ab.variants,
                  "Variant (repeatable): full, no_gating, single_view:<v>, no_connection, no_depth, "
                  "optionally @noise:view=<v>[,sigma=s] or @bad_lighting:view=<v>[,gain=g]");
  abl->add_option("--config", ab.config, "JSON file with \"model\" and \"train\" overrides");
  abl->add_option("--folds", ab.folds, "Number of cross-validation folds")->check(CLI::Range(2, 1000));
  abl->add_option("--fold-list", ab.fold_list, "Comma list of folds to run (default all)");
  abl->add_option("--seed", ab.seed, "Base training seed; fold f uses seed + f");
  abl->add_option("--split-seed", ab.split_seed, "Seed of the episode split");
  abl->add_option("--epochs", ab.epochs, "Override the number of epochs");
  abl->add_flag("--eval-only-corruption", ab.eval_only_corruption, "Train on clean data, corrupt only evaluation");
  abl->add_option("--out", ab.out, "Output directory")->required();

  TrajArgs tj;
  auto* traj = app.add_subcommand("trajgen", "Emit state-action trajectories with a trained model");
  traj->add_option("--checkpoint", tj.checkpoint, "Checkpoint directory")->required();
  traj->add_option("--data", tj.data, "Dataset directory")->required();
  traj->add_option("--episodes", tj.episodes, "Comma list of episodes (default: the checkpoint's test fold)");
  traj->add_option("--out", tj.out, "Output directory")->required();

  GradArgs gc;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the analytic gradients (f64)");
  grad->add_option("--module", gc.module, "core, state, action or full")
      ->check(CLI::IsMember({"core", "state", "action", "full"}));
  grad->add_option("--probes", gc.probes, "Number of probed coordinates");
  grad->add_option("--seed", gc.seed, "Seed of the model, inputs and probes");
  grad->add_option("--out", gc.out, "Directory for the run manifest (default: print it)");

  std::vector<std::string> argv{"mvsa"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargv;
  for (const auto& s : argv) cargv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return kExitUsage;
  }

  if (gen->parsed()) {
    Runner r("gen-data", args, err);
    return r(fs::path(g.out) / "run_manifest.json", out, [&] { gen_data(g, r.manifest(), out); });
  }
  if (tr->parsed()) {
    Runner r("train", args, err);
    return r(fs::path(t.out) / "run_manifest.json", out, [&] { train_cmd(t, r.manifest(), out); });
  }
  if (ev->parsed()) {
    Runner r("eval", args, err);
    return r(fs::path(e.out) / "run_manifest.json", out, [&] { eval_cmd(e, r.manifest(), out); });
  }
  if (abl->parsed()) {
    Runner r("ablate", args, err);
    return r(fs::path(ab.out) / "run_manifest.json", out, [&] { ablate_cmd(ab, r.manifest(), out); });
  }
  if (traj->parsed()) {
    Runner r("trajgen", args, err);
    return r(fs::path(tj.out) / "run_manifest.json", out, [&] { trajgen_cmd(tj, r.manifest(), out); });
  }
  Runner r("grad-check", args, err);
  bool passed = false;
  const fs::path mpath = gc.out.empty() ? fs::path() : fs::path(gc.out) / "run_manifest.json";
  return r(mpath, out, [&] { grad_check_cmd(gc, r.manifest(), out, passed); });
}

}  // namespace mvsa::cli
