#pragma once

#include <filesystem>

#include "json.hpp"
#include "mvsa/network/model.hpp"

namespace mvsa {

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes `dir/manifest.json` plus one tensor file per parameter and per
/// batch-norm statistic. `training` is stored verbatim (seed, epochs, loss).
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& training = {});

struct LoadedCheckpoint {
  Model model;
  nlohmann::json training;
};

/// Rebuilds the model from the manifest config and validates every tensor
/// shape against it. Throws FormatError on a malformed or mismatched checkpoint.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mvsa
