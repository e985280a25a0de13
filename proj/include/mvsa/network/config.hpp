#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mvsa {

enum class Domain { sorting, patrolling };

std::string to_string(Domain d);
Domain parse_domain(const std::string& s);

/// One classifier output. `unknown_slot` appends an extra class index that is
/// never a training target and is only produced by the unknown override.
struct HeadSpec {
  std::string name;
  int classes = 0;
  bool unknown_slot = false;

  int width() const { return classes + (unknown_slot ? 1 : 0); }
  int unknown_index() const { return classes; }
  bool operator==(const HeadSpec&) const = default;
};

struct MvsaConfig {
  Domain domain = Domain::sorting;
  int num_views = 3;
  int height = 120;
  int width = 160;
  bool use_depth = true;
  int window = 5;
  /// true: the action branch sees frames t-4..t; false: t-5..t-1.
  bool window_includes_current = true;
  std::vector<HeadSpec> state_heads;
  HeadSpec action_head;
  bool use_gating = true;
  bool state_action_connection = true;
  int hidden1 = 128;
  int hidden2 = 64;
  int filters = 32;
  /// Expert slots per frame (1 for sorting, 2 for patrolling).
  int max_experts = 1;

  int channels() const { return use_depth ? 4 : 3; }
  bool operator==(const MvsaConfig&) const = default;
};

MvsaConfig sorting_config(int num_views = 3);
MvsaConfig patrolling_config(int num_views = 2);

/// Throws ConfigError when the configuration cannot be built.
void validate(const MvsaConfig& c);

nlohmann::json to_json(const MvsaConfig& c);
MvsaConfig config_from_json(const nlohmann::json& j);

/// Spatial extents after each stage of the state branch, starting with the
/// input: input, conv1, pool1, conv2, conv3, pool2, conv4, conv5, pool3.
std::vector<std::pair<std::int64_t, std::int64_t>> state_branch_extents(int height, int width);

/// Action branch extents: input, td_conv1, td_conv2, td_pool, gru1, gru2.
std::vector<std::pair<std::int64_t, std::int64_t>> action_branch_extents(int height, int width);

std::int64_t state_feature_length(const MvsaConfig& c);
std::int64_t action_feature_length(const MvsaConfig& c);

}  // namespace mvsa
