#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace mvsa {

inline constexpr int kRunManifestFormatVersion = 1;
inline constexpr const char* kToolVersion = "mvsa 0.1.0";

/// FNV-1a over the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Hash of a JSON value independent of the order its object keys were
/// inserted in.
std::string config_hash(const nlohmann::json& config);

/// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

/// Record of one CLI invocation. The command writes it on success and on
/// failure alike.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
  /// "ok" or "failed"
  std::string status = "running";
  std::string error;
  int exit_code = 0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

RunManifest read_run_manifest(const std::filesystem::path& path);

}  // namespace mvsa
