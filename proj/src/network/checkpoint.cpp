#include "mvsa/network/checkpoint.hpp"

#include <fstream>

#include "mvsa/core/tensor_io.hpp"

namespace mvsa {

namespace fs = std::filesystem;

void save_checkpoint(const Model& model, const fs::path& dir, const nlohmann::json& training) {
  fs::create_directories(dir);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.parameters()) {
    const std::string file = p.name + ".mvst";
    write_tensor(dir / file, p.value);
    params[p.name] = file;
  }
  nlohmann::json bn = nlohmann::json::object();
  for (const auto& [name, st] : model.bn_states()) {
    const std::string mean_file = name + ".running_mean.mvst";
    const std::string var_file = name + ".running_var.mvst";
    write_tensor(dir / mean_file, st.running_mean);
    write_tensor(dir / var_file, st.running_var);
    bn[name] = {{"running_mean", mean_file}, {"running_var", var_file}, {"initialized", st.initialized}};
  }
  nlohmann::json manifest = {{"format", "mvsa-checkpoint"},
                             {"format_version", kCheckpointFormatVersion},
                             {"dtype", "f32"},
                             {"config", to_json(model.config())},
                             {"parameters", params},
                             {"batchnorm", bn},
                             {"training", training.is_null() ? nlohmann::json::object() : training}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

namespace {

Tensor read_checked(const fs::path& file, const Shape& expected, const std::string& what) {
  Tensor t = read_tensor<float>(file);
  if (t.shape() != expected) {
    throw FormatError("checkpoint tensor " + what + " has shape " + shape_str(t.shape()) + ", config expects " +
                      shape_str(expected));
  }
  return t;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "mvsa-checkpoint") throw FormatError("not a checkpoint: " + dir.string());
  if (manifest.value("format_version", -1) != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format version in " + dir.string());
  }
  if (manifest.value("dtype", "") != "f32") throw FormatError("checkpoint dtype must be f32");
  MvsaConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  LoadedCheckpoint out{Model(config, 0), manifest.value("training", nlohmann::json::object())};
  const auto& params = manifest.at("parameters");
  if (params.size() != out.model.parameters().size()) {
    throw FormatError("checkpoint lists " + std::to_string(params.size()) + " parameters, config builds " +
                      std::to_string(out.model.parameters().size()));
  }
  for (auto& p : out.model.parameters()) {
    if (!params.contains(p.name)) throw FormatError("checkpoint is missing parameter " + p.name);
    p.value = read_checked(dir / params.at(p.name).get<std::string>(), p.value.shape(), p.name);
  }
  const auto& bn = manifest.at("batchnorm");
  for (auto& [name, st] : out.model.bn_states()) {
    if (!bn.contains(name)) throw FormatError("checkpoint is missing batch-norm state " + name);
    const auto& e = bn.at(name);
    st.running_mean = read_checked(dir / e.at("running_mean").get<std::string>(), st.running_mean.shape(), name);
    st.running_var = read_checked(dir / e.at("running_var").get<std::string>(), st.running_var.shape(), name);
    st.initialized = e.at("initialized").get<bool>();
  }
  return out;
}

}  // namespace mvsa
