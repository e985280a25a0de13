#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mvsa/core/tensor.hpp"
#include "mvsa/network/config.hpp"
#include "mvsa/network/detection.hpp"
#include "mvsa/worldgen/corrupt.hpp"
#include "mvsa/worldgen/patrol.hpp"
#include "mvsa/worldgen/sorting.hpp"

namespace mvsa {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kDatasetFps = 10;

/// Ground truth of one expert at one step. `heads` follows the state head
/// order of the domain config; an expert seen by no camera carries the unknown
/// index on every head and the action.
struct ExpertLabel {
  int id = 0;
  std::vector<int> heads;
  int action = 0;
  Status status = Status::unknown;  // sorting: the target onion's true status
  bool visible = true;

  bool operator==(const ExpertLabel&) const = default;
};

struct StepLabels {
  std::vector<ExpertLabel> experts;
  std::vector<std::vector<Detection>> detections;  // per view
};

struct Episode {
  std::uint64_t seed = 0;
  std::vector<Tensor> views;  // per view [T, H, W, 4]
  std::vector<StepLabels> steps;

  std::int64_t length() const { return static_cast<std::int64_t>(steps.size()); }
};

struct DatasetSpec {
  Domain domain = Domain::sorting;
  int episodes = 75;
  std::uint64_t seed = 0;
  int views = 3;
  int height = 120;
  int width = 160;
  /// Episode length is steps + U{-step_jitter, step_jitter}.
  int steps = 40;
  int step_jitter = 5;
  std::vector<Corruption> corruption;
  double miss_rate = 0.0;
  double conf_noise = 0.0;
  sorting::ScriptParams script;
  sorting::RenderParams render;
  patrol::PatrolParams patrol;
};

/// Domain defaults: sorting 3 views of 40 +- 5 steps, patrolling 2 views of
/// 100 steps.
DatasetSpec default_spec(Domain d);

struct Dataset {
  DatasetSpec spec;
  MvsaConfig schema;  // head layout and frame geometry of the domain
  std::vector<double> conveyor_end_x;  // sorting, per view, pixels
  double effector_radius = 0.0;        // sorting, pixels
  std::vector<Episode> episodes;

  std::int64_t frames() const;
};

/// Child seed of episode k.
std::uint64_t episode_seed(std::uint64_t seed, int k);

Episode generate_episode(const DatasetSpec& spec, int k);
Dataset generate_dataset(const DatasetSpec& spec);

/// Corrupts the targeted views' RGB and degrades their detections, seeded per
/// (episode, view).
void apply_corruptions(Dataset& ds, const std::vector<Corruption>& list, std::uint64_t seed);

nlohmann::json dataset_manifest(const Dataset& ds);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws FormatError on a missing or mismatched manifest, label file or tensor.
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const StepLabels& s, const MvsaConfig& schema, int t);
StepLabels step_labels_from_json(const nlohmann::json& j, const MvsaConfig& schema);

}  // namespace mvsa
