#include "mvsa/cli/run_manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "mvsa/core/error.hpp"
#include "mvsa/core/tensor_io.hpp"

namespace mvsa {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const nlohmann::json& config) {
  // nlohmann::json keeps object keys sorted, so dump() is already canonical.
  return fnv1a_hex(config.dump());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return {{"format", "mvsa-run"},
          {"format_version", kRunManifestFormatVersion},
          {"tool_version", kToolVersion},
          {"command", command},
          {"argv", argv},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"dataset_hash", dataset_hash},
          {"started", started},
          {"finished", finished},
          {"outputs", outputs},
          {"status", status},
          {"error", error},
          {"exit_code", exit_code},
          {"extra", extra}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_bytes(path, to_json().dump(2) + "\n");
}

RunManifest read_run_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run manifest " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "mvsa-run" || j.value("format_version", 0) != kRunManifestFormatVersion) {
    throw FormatError("not a run manifest (or unsupported version): " + path.string());
  }
  RunManifest m;
  try {
    m.command = j.at("command");
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seed = j.at("seed");
    m.dataset_hash = j.at("dataset_hash");
    m.started = j.at("started");
    m.finished = j.at("finished");
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.status = j.at("status");
    m.error = j.at("error");
    m.exit_code = j.at("exit_code");
    m.extra = j.at("extra");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run manifest " + path.string() + ": " + e.what());
  }
  if (j.value("config_hash", "") != config_hash(m.config)) {
    throw FormatError("run manifest " + path.string() + ": config hash does not match");
  }
  return m;
}

}  // namespace mvsa
