#include "mvsa/worldgen/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mvsa/core/error.hpp"
#include "mvsa/core/tensor_io.hpp"
#include "mvsa/network/decision.hpp"
#include "mvsa/worldgen/detector.hpp"

namespace mvsa {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetSpec default_spec(Domain d) {
  DatasetSpec s;
  s.domain = d;
  if (d == Domain::patrolling) {
    s.views = 2;
    s.episodes = 50;
    s.steps = 100;
    s.step_jitter = 0;
  }
  return s;
}

std::int64_t Dataset::frames() const {
  std::int64_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

std::uint64_t episode_seed(std::uint64_t seed, int k) {
  return Rng(seed).split(static_cast<std::uint64_t>(k)).next_u64();
}

namespace {

MvsaConfig schema_for(const DatasetSpec& spec) {
  MvsaConfig c = spec.domain == Domain::sorting ? sorting_config(spec.views) : patrolling_config(spec.views);
  c.height = spec.height;
  c.width = spec.width;
  return c;
}

void check_spec(const DatasetSpec& spec) {
  if (spec.episodes < 1) throw ConfigError("dataset: episodes must be >= 1");
  if (spec.height < 8 || spec.width < 8) throw ConfigError("dataset: frames must be at least 8x8");
  if (spec.steps - spec.step_jitter < 5) throw ConfigError("dataset: episodes need at least 5 steps");
  if (spec.step_jitter < 0) throw ConfigError("dataset: step_jitter must be >= 0");
  if (spec.domain == Domain::patrolling && spec.views != 2) {
    throw ConfigError("dataset: the patrolling domain has exactly 2 cameras");
  }
  if (spec.views < 1) throw ConfigError("dataset: views must be >= 1");
  for (const auto& c : spec.corruption) {
    for (int v : c.views) {
      if (v < 0 || v >= spec.views) throw ConfigError("dataset: corruption targets missing view " + std::to_string(v));
    }
  }
}

void copy_frame(Tensor& dst, std::int64_t t, const Tensor& frame) {
  const std::int64_t n = frame.numel();
  std::memcpy(dst.data() + t * n, frame.data(), static_cast<std::size_t>(n) * sizeof(float));
}

Episode sorting_episode(const DatasetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  sorting::ScriptParams sp = spec.script;
  sp.num_views = spec.views;
  sp.max_steps = spec.steps + rng.uniform_int(-spec.step_jitter, spec.step_jitter);
  const auto script = sorting::script_episode(rng.split(1).next_u64(), 6, sp);
  const auto views = sorting::default_views(spec.views);
  Episode ep;
  ep.seed = seed;
  const auto T = static_cast<std::int64_t>(script.size());
  for (int v = 0; v < spec.views; ++v) ep.views.emplace_back(Shape{T, spec.height, spec.width, 4});
  const Rng render_root = rng.split(2);
  const Rng detect_root = rng.split(3);
  for (std::int64_t t = 0; t < T; ++t) {
    const auto& s = script[static_cast<std::size_t>(t)];
    StepLabels labels;
    ExpertLabel e;
    e.heads = {s.onion_location, s.eff_location};
    e.action = s.action;
    e.status = s.status;
    labels.experts.push_back(e);
    for (int v = 0; v < spec.views; ++v) {
      const auto key = static_cast<std::uint64_t>(t * spec.views + v);
      Rng r = render_root.split(key);
      auto out = sorting::render(s.scene, views[static_cast<std::size_t>(v)], spec.height, spec.width, r, spec.render);
      copy_frame(ep.views[static_cast<std::size_t>(v)], t, out.frame);
      Rng d = detect_root.split(key);
      labels.detections.push_back(oracle_detector(out.truth, spec.miss_rate, spec.conf_noise, d));
    }
    ep.steps.push_back(std::move(labels));
  }
  return ep;
}

Episode patrol_episode(const DatasetSpec& spec, const MvsaConfig& schema, std::uint64_t seed) {
  Rng rng(seed);
  const int length = spec.steps + rng.uniform_int(-spec.step_jitter, spec.step_jitter);
  const auto script = patrol::script_patrol_episode(rng.split(1).next_u64(), length, spec.patrol);
  const auto views = patrol::default_patrol_views();
  Episode ep;
  ep.seed = seed;
  const auto T = static_cast<std::int64_t>(script.size());
  for (int v = 0; v < spec.views; ++v) ep.views.emplace_back(Shape{T, spec.height, spec.width, 4});
  const Rng render_root = rng.split(2);
  const Rng detect_root = rng.split(3);
  for (std::int64_t t = 0; t < T; ++t) {
    const auto& s = script[static_cast<std::size_t>(t)];
    StepLabels labels;
    for (int v = 0; v < spec.views; ++v) {
      const auto key = static_cast<std::uint64_t>(t * spec.views + v);
      Rng r = render_root.split(key);
      auto out = patrol::render_patrol(s.scene, views[static_cast<std::size_t>(v)], spec.height, spec.width, r);
      copy_frame(ep.views[static_cast<std::size_t>(v)], t, out.frame);
      Rng d = detect_root.split(key);
      labels.detections.push_back(oracle_detector(out.truth, spec.miss_rate, spec.conf_noise, d));
    }
    for (int k = 0; k < patrol::kPatrollers; ++k) {
      const auto& p = s.scene.poses[static_cast<std::size_t>(k)];
      ExpertLabel e;
      e.id = k;
      e.visible = std::ranges::any_of(views, [&](const patrol::PatrolView& v) { return v.sees(p); });
      if (e.visible) {
        e.heads = {p.x, p.y, p.heading};
        e.action = s.action[static_cast<std::size_t>(k)];
      } else {
        for (const auto& h : schema.state_heads) e.heads.push_back(h.unknown_index());
        e.action = schema.action_head.unknown_index();
      }
      labels.experts.push_back(e);
    }
    ep.steps.push_back(std::move(labels));
  }
  return ep;
}

}  // namespace

Episode generate_episode(const DatasetSpec& spec, int k) {
  check_spec(spec);
  const auto seed = episode_seed(spec.seed, k);
  if (spec.domain == Domain::sorting) return sorting_episode(spec, seed);
  return patrol_episode(spec, schema_for(spec), seed);
}

Dataset generate_dataset(const DatasetSpec& spec) {
  check_spec(spec);
  Dataset ds;
  ds.spec = spec;
  ds.schema = schema_for(spec);
  if (spec.domain == Domain::sorting) {
    for (const auto& v : sorting::default_views(spec.views)) ds.conveyor_end_x.push_back(v.conveyor_end_x(spec.width));
    ds.effector_radius = kEffectorRadiusPx * spec.width / 160.0;
  }
  for (int k = 0; k < spec.episodes; ++k) ds.episodes.push_back(generate_episode(spec, k));
  if (!spec.corruption.empty()) apply_corruptions(ds, spec.corruption, spec.seed);
  return ds;
}

void apply_corruptions(Dataset& ds, const std::vector<Corruption>& list, std::uint64_t seed) {
  const Rng root = Rng(seed).split(0xC0220);
  for (std::size_t k = 0; k < ds.episodes.size(); ++k) {
    Episode& ep = ds.episodes[k];
    for (std::size_t ci = 0; ci < list.size(); ++ci) {
      const Corruption& c = list[ci];
      for (int v = 0; v < static_cast<int>(ep.views.size()); ++v) {
        if (!c.targets(v)) continue;
        Rng r = root.split(k).split(ci).split(static_cast<std::uint64_t>(v));
        corrupt(ep.views[static_cast<std::size_t>(v)], c, r);
        for (auto& step : ep.steps) {
          auto& dets = step.detections[static_cast<std::size_t>(v)];
          dets = degrade_detections(std::move(dets), c);
        }
      }
    }
  }
}

json to_json(const StepLabels& s, const MvsaConfig& schema, int t) {
  json experts = json::array();
  for (const auto& e : s.experts) {
    json heads = json::object();
    for (std::size_t h = 0; h < schema.state_heads.size(); ++h) heads[schema.state_heads[h].name] = e.heads.at(h);
    json je = {{"id", e.id}, {"labels", heads}, {"action", e.action}, {"visible", e.visible}};
    if (schema.domain == Domain::sorting) je["status"] = to_string(e.status);
    experts.push_back(je);
  }
  json dets = json::array();
  for (const auto& view : s.detections) {
    json jv = json::array();
    for (const auto& d : view) jv.push_back(to_json(d));
    dets.push_back(jv);
  }
  return {{"t", t}, {"time", static_cast<double>(t) / kDatasetFps}, {"experts", experts}, {"detections", dets}};
}

StepLabels step_labels_from_json(const json& j, const MvsaConfig& schema) {
  StepLabels s;
  for (const auto& je : j.at("experts")) {
    ExpertLabel e;
    e.id = je.at("id").get<int>();
    for (const auto& h : schema.state_heads) e.heads.push_back(je.at("labels").at(h.name).get<int>());
    e.action = je.at("action").get<int>();
    e.visible = je.at("visible").get<bool>();
    if (je.contains("status")) e.status = parse_status(je.at("status").get<std::string>());
    s.experts.push_back(e);
  }
  for (const auto& jv : j.at("detections")) {
    std::vector<Detection> view;
    for (const auto& jd : jv) view.push_back(detection_from_json(jd));
    s.detections.push_back(std::move(view));
  }
  return s;
}

json dataset_manifest(const Dataset& ds) {
  const auto& s = ds.spec;
  json schema = json::array();
  for (const auto& h : ds.schema.state_heads) {
    schema.push_back({{"name", h.name}, {"classes", h.classes}, {"unknown_slot", h.unknown_slot}});
  }
  json episodes = json::array();
  json seeds = json::array();
  for (std::size_t k = 0; k < ds.episodes.size(); ++k) {
    episodes.push_back({{"index", k}, {"steps", ds.episodes[k].length()}});
    seeds.push_back(ds.episodes[k].seed);
  }
  json m = {{"format", "mvsa-dataset"},
            {"format_version", kDatasetFormatVersion},
            {"domain", to_string(s.domain)},
            {"views", s.views},
            {"height", s.height},
            {"width", s.width},
            {"channels", 4},
            {"fps", kDatasetFps},
            {"seed", s.seed},
            {"schema", {{"state_heads", schema},
                        {"action", {{"name", ds.schema.action_head.name},
                                    {"classes", ds.schema.action_head.classes},
                                    {"unknown_slot", ds.schema.action_head.unknown_slot}}}}},
            {"episodes", episodes},
            {"seeds", seeds},
            {"corruption", format_corruptions(s.corruption)},
            {"detector", {{"miss_rate", s.miss_rate}, {"conf_noise", s.conf_noise}}}};
  if (s.domain == Domain::sorting) {
    m["conveyor_end_x"] = ds.conveyor_end_x;
    m["effector_radius"] = ds.effector_radius;
    m["blemish_single_view"] = s.script.blemish_single_view;
  }
  return m;
}

namespace {

std::string ep_file(std::size_t k, const std::string& suffix) { return "ep" + std::to_string(k) + suffix; }

}  // namespace

void write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  for (std::size_t k = 0; k < ds.episodes.size(); ++k) {
    const Episode& ep = ds.episodes[k];
    for (std::size_t v = 0; v < ep.views.size(); ++v) {
      write_tensor(dir / ep_file(k, "_view" + std::to_string(v) + ".mvst"), ep.views[v]);
    }
    std::string lines;
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      lines += to_json(ep.steps[t], ds.schema, static_cast<int>(t)).dump();
      lines += '\n';
    }
    write_file_bytes(dir / ep_file(k, "_labels.jsonl"), lines);
  }
  write_file_bytes(dir / "manifest.json", dataset_manifest(ds).dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_file_bytes(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("dataset manifest is not valid JSON: " + std::string(e.what()));
  }
  if (m.value("format", "") != "mvsa-dataset") throw FormatError("not a dataset manifest: " + dir.string());
  if (!m.contains("format_version")) throw FormatError("dataset manifest lacks format_version");
  if (m.at("format_version").get<int>() != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format_version " + m.at("format_version").dump());
  }
  Dataset ds;
  try {
    auto& s = ds.spec;
    s.domain = parse_domain(m.at("domain").get<std::string>());
    s.views = m.at("views").get<int>();
    s.height = m.at("height").get<int>();
    s.width = m.at("width").get<int>();
    s.seed = m.at("seed").get<std::uint64_t>();
    s.corruption = parse_corruptions(m.at("corruption").get<std::string>());
    s.miss_rate = m.at("detector").at("miss_rate").get<double>();
    s.conf_noise = m.at("detector").at("conf_noise").get<double>();
    s.episodes = static_cast<int>(m.at("episodes").size());
    ds.schema = schema_for(s);
    if (s.domain == Domain::sorting) {
      ds.conveyor_end_x = m.at("conveyor_end_x").get<std::vector<double>>();
      ds.effector_radius = m.at("effector_radius").get<double>();
      s.script.blemish_single_view = m.value("blemish_single_view", false);
    }
    const auto& heads = m.at("schema").at("state_heads");
    if (heads.size() != ds.schema.state_heads.size()) throw FormatError("dataset schema does not match its domain");
    for (std::size_t h = 0; h < heads.size(); ++h) {
      if (heads[h].at("name") != ds.schema.state_heads[h].name ||
          heads[h].at("classes").get<int>() != ds.schema.state_heads[h].classes) {
        throw FormatError("dataset schema does not match its domain");
      }
    }
    const auto& seeds = m.at("seeds");
    for (std::size_t k = 0; k < m.at("episodes").size(); ++k) {
      Episode ep;
      ep.seed = seeds.at(k).get<std::uint64_t>();
      const auto T = m.at("episodes")[k].at("steps").get<std::int64_t>();
      for (int v = 0; v < s.views; ++v) {
        auto t = read_tensor<float>(dir / ep_file(k, "_view" + std::to_string(v) + ".mvst"));
        if (t.shape() != Shape{T, s.height, s.width, 4}) {
          throw FormatError("episode " + std::to_string(k) + " view " + std::to_string(v) + " has shape " +
                            shape_str(t.shape()));
        }
        ep.views.push_back(std::move(t));
      }
      std::ifstream in(dir / ep_file(k, "_labels.jsonl"));
      if (!in) throw IoError("cannot open labels of episode " + std::to_string(k));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        ep.steps.push_back(step_labels_from_json(json::parse(line), ds.schema));
      }
      if (ep.length() != T) throw FormatError("episode " + std::to_string(k) + " label count mismatch");
      ds.episodes.push_back(std::move(ep));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed dataset: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw FormatError("malformed dataset: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace mvsa
