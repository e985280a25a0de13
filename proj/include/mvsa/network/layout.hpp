#pragma once

#include <array>

#include "mvsa/core/ops.hpp"

namespace mvsa {

/// One spatial stage of a branch: a conv (with ReLU) or a max-pool.
struct Stage {
  const char* name;
  bool is_conv;
  Window2 window;
  Stride2 stride;
};

/// Five 32-filter convs with pools after conv1, conv3 and conv5.
inline constexpr std::array<Stage, 8> kStateStages{{
    {"conv1", true, {3, 9}, {3, 3}},
    {"pool1", false, {4, 4}, {3, 3}},
    {"conv2", true, {3, 9}, {3, 3}},
    {"conv3", true, {3, 9}, {3, 3}},
    {"pool2", false, {2, 2}, {3, 3}},
    {"conv4", true, {3, 9}, {3, 3}},
    {"conv5", true, {3, 9}, {2, 2}},
    {"pool3", false, {2, 2}, {2, 2}},
}};

/// Time-distributed stem applied to every frame of the window.
inline constexpr std::array<Stage, 3> kActionStages{{
    {"td_conv1", true, {3, 3}, {2, 2}},
    {"td_conv2", true, {3, 3}, {2, 2}},
    {"td_pool", false, {4, 4}, {3, 3}},
}};

}  // namespace mvsa
