#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mvsa/core/rng.hpp"
#include "mvsa/network/detection.hpp"
#include "mvsa/worldgen/raster.hpp"
#include "mvsa/worldgen/rendered.hpp"

namespace mvsa::sorting {

/// Label indices of the onion and effector location heads.
enum Region { at_home = 0, on_conveyor = 1, in_front = 2, at_bin = 3 };
enum Action { claim = 0, inspect = 1, place_in_bin = 2, place_on_conveyor = 3 };

inline constexpr int kRegions = 4;
inline constexpr int kActions = 4;

/// Point on the work surface, both coordinates in [0, 1]; u grows toward the
/// conveyor's end, w grows away from the conveyor.
struct WorldPoint {
  double u = 0, w = 0;
};

/// The four regions partition the surface: the bin strip on the left, then
/// conveyor / in-front / home bands from top to bottom.
struct Layout {
  double bin_u = 0.22;
  double conveyor_w = 0.36;
  double front_w = 0.68;

  int region_of(WorldPoint p) const;
};

/// An axis-aligned window of the surface mapped onto the whole frame.
struct SortView {
  int id = 0;
  double u0 = 0, u1 = 1, w0 = 0, w1 = 1;
  bool flip_vertical = false;
  /// Background colour per region, then onion, blemish, hand, occluder.
  std::array<Rgbd, 4> region_color{};
  Rgbd onion{}, blemish{}, hand{}, occluder{};

  double to_x(double u, std::int64_t width) const;
  double to_y(double w, std::int64_t height) const;
  WorldPoint to_world(double x, double y, std::int64_t width, std::int64_t height) const;
  /// Frame x of the conveyor's end (u = 1), clipped to the frame.
  double conveyor_end_x(std::int64_t width) const;
};

std::vector<SortView> default_views(int num_views);

struct Onion {
  int id = 0;
  WorldPoint pos;
  bool blemished = false;
  /// Per view: the blemish can be seen from there.
  std::vector<bool> blemish_visible;
  bool present = true;
};

/// Band covering x in [x0, x1) of the frame (fractions of the width).
struct Occluder {
  bool active = false;
  double x0 = 0, x1 = 0, velocity = 0;
  int remaining = 0;
};

struct Scene {
  std::vector<Onion> onions;
  int target = 0;
  bool held = false;
  WorldPoint hand;
  std::vector<Occluder> occluders;  // per view
};

struct Step {
  Scene scene;
  int onion_location = 0;
  int eff_location = 0;
  Status status = Status::unknown;
  int action = 0;
};

struct ScriptParams {
  int num_views = 3;
  /// Every blemish is visible from exactly one view (otherwise a uniformly
  /// drawn non-empty strict subset).
  bool blemish_single_view = false;
  double blemish_rate = 0.5;
  /// Per view and step, chance that a passer-by enters the view.
  double occlusion_rate = 0.06;
  double speed = 0.15;
  /// Truncate the script at this many steps (0 = run every onion to the end).
  int max_steps = 0;
};

/// Scripted sort of `num_onions` onions: claim (reach the conveyor, carry to
/// home), inspect (lift in front, hold), then place in the bin if blemished or
/// back on the conveyor. The action of step t produced the motion from t-1 to t.
std::vector<Step> script_episode(std::uint64_t seed, int num_onions, const ScriptParams& params,
                                 const Layout& layout = {});

struct RenderParams {
  double onion_radius = 0.05;  // fraction of the frame width
  double hand_radius = 0.075;
  double depth_jitter = 0.01;
};

/// Throws ConfigError when the hand or a present onion lies outside the view.
Rendered render(const Scene& scene, const SortView& view, std::int64_t height, std::int64_t width, Rng& rng,
                const RenderParams& params = {}, const Layout& layout = {});

}  // namespace mvsa::sorting
