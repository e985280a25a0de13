#include "mvsa/network/config.hpp"

#include "mvsa/core/conv_gru.hpp"
#include "mvsa/core/error.hpp"
#include "mvsa/network/layout.hpp"

namespace mvsa {

std::string to_string(Domain d) { return d == Domain::sorting ? "sorting" : "patrolling"; }

Domain parse_domain(const std::string& s) {
  if (s == "sorting") return Domain::sorting;
  if (s == "patrolling") return Domain::patrolling;
  throw ConfigError("unknown domain '" + s + "' (expected sorting or patrolling)");
}

MvsaConfig sorting_config(int num_views) {
  MvsaConfig c;
  c.domain = Domain::sorting;
  c.num_views = num_views;
  c.state_heads = {{"onion_location", 4, false}, {"eff_location", 4, false}};
  c.action_head = {"action", 4, false};
  c.max_experts = 1;
  return c;
}

MvsaConfig patrolling_config(int num_views) {
  MvsaConfig c;
  c.domain = Domain::patrolling;
  c.num_views = num_views;
  c.state_heads = {{"x", 10, true}, {"y", 5, true}, {"theta", 4, true}};
  c.action_head = {"action", 4, true};
  c.max_experts = 2;
  return c;
}

void validate(const MvsaConfig& c) {
  if (c.num_views < 1) throw ConfigError("num_views must be >= 1");
  if (c.height < 1 || c.width < 1) throw ConfigError("frame extents must be positive");
  if (c.window != 5) throw ConfigError("window must be 5");
  if (c.state_heads.empty()) throw ConfigError("at least one state head is required");
  for (const auto& h : c.state_heads) {
    if (h.classes < 2) throw ConfigError("head '" + h.name + "' needs at least 2 classes");
  }
  if (c.action_head.classes < 2) throw ConfigError("action head needs at least 2 classes");
  if (c.hidden1 < 1 || c.hidden2 < 1 || c.filters < 1) throw ConfigError("layer widths must be positive");
  if (c.max_experts < 1) throw ConfigError("max_experts must be >= 1");
  for (const auto& [h, w] : state_branch_extents(c.height, c.width)) {
    if (h < 1 || w < 1) throw ConfigError("input too small for the state branch");
  }
  for (const auto& [h, w] : action_branch_extents(c.height, c.width)) {
    if (h < 1 || w < 1) throw ConfigError("input too small for the action branch");
  }
}

namespace {

nlohmann::json head_json(const HeadSpec& h) {
  return {{"name", h.name}, {"classes", h.classes}, {"unknown_slot", h.unknown_slot}};
}

HeadSpec head_from(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.at("classes").get<int>(), j.value("unknown_slot", false)};
}

}  // namespace

nlohmann::json to_json(const MvsaConfig& c) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : c.state_heads) heads.push_back(head_json(h));
  return {{"domain", to_string(c.domain)},
          {"num_views", c.num_views},
          {"height", c.height},
          {"width", c.width},
          {"use_depth", c.use_depth},
          {"window", c.window},
          {"window_includes_current", c.window_includes_current},
          {"state_heads", heads},
          {"action_head", head_json(c.action_head)},
          {"use_gating", c.use_gating},
          {"state_action_connection", c.state_action_connection},
          {"hidden1", c.hidden1},
          {"hidden2", c.hidden2},
          {"filters", c.filters},
          {"max_experts", c.max_experts}};
}

MvsaConfig config_from_json(const nlohmann::json& j) {
  try {
    MvsaConfig c = parse_domain(j.at("domain").get<std::string>()) == Domain::sorting
                       ? sorting_config(j.value("num_views", 3))
                       : patrolling_config(j.value("num_views", 2));
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.use_depth = j.value("use_depth", c.use_depth);
    c.window = j.value("window", c.window);
    c.window_includes_current = j.value("window_includes_current", c.window_includes_current);
    if (j.contains("state_heads")) {
      c.state_heads.clear();
      for (const auto& h : j.at("state_heads")) c.state_heads.push_back(head_from(h));
    }
    if (j.contains("action_head")) c.action_head = head_from(j.at("action_head"));
    c.use_gating = j.value("use_gating", c.use_gating);
    c.state_action_connection = j.value("state_action_connection", c.state_action_connection);
    c.hidden1 = j.value("hidden1", c.hidden1);
    c.hidden2 = j.value("hidden2", c.hidden2);
    c.filters = j.value("filters", c.filters);
    c.max_experts = j.value("max_experts", c.max_experts);
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::vector<std::pair<std::int64_t, std::int64_t>> state_branch_extents(int height, int width) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out{{height, width}};
  std::int64_t h = height, w = width;
  for (const auto& stage : kStateStages) {
    h = same_padding(h, stage.window.h, stage.stride.h).out;
    w = same_padding(w, stage.window.w, stage.stride.w).out;
    out.emplace_back(h, w);
  }
  return out;
}

std::vector<std::pair<std::int64_t, std::int64_t>> action_branch_extents(int height, int width) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out{{height, width}};
  std::int64_t h = height, w = width;
  for (const auto& stage : kActionStages) {
    h = same_padding(h, stage.window.h, stage.stride.h).out;
    w = same_padding(w, stage.window.w, stage.stride.w).out;
    out.emplace_back(h, w);
  }
  for (int layer = 0; layer < 2; ++layer) {
    std::tie(h, w) = conv_gru_hidden_grid(h, w);
    out.emplace_back(h, w);
  }
  return out;
}

std::int64_t state_feature_length(const MvsaConfig& c) {
  const auto e = state_branch_extents(c.height, c.width).back();
  return e.first * e.second * c.filters;
}

std::int64_t action_feature_length(const MvsaConfig& c) {
  const auto e = action_branch_extents(c.height, c.width).back();
  return e.first * e.second * c.filters;
}

}  // namespace mvsa
