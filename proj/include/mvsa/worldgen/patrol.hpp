#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mvsa/core/rng.hpp"
#include "mvsa/worldgen/raster.hpp"
#include "mvsa/worldgen/rendered.hpp"

namespace mvsa::patrol {

enum Heading { north = 0, south = 1, east = 2, west = 3 };
enum Action { move_forward = 0, turn_right = 1, turn_left = 2, stop = 3 };

inline constexpr int kHeadings = 4;
inline constexpr int kActions = 4;
inline constexpr int kPatrollers = 2;
inline constexpr int kFps = 10;

/// Hallway map: the ring of border cells of an nx by ny grid is free, the
/// interior is wall. y grows northward.
struct Grid {
  int nx = 10;
  int ny = 5;

  bool inside(int x, int y) const { return x >= 0 && x < nx && y >= 0 && y < ny; }
  bool free(int x, int y) const { return inside(x, y) && (x == 0 || y == 0 || x == nx - 1 || y == ny - 1); }
};

struct Pose {
  int x = 0, y = 0;
  int heading = north;

  bool operator==(const Pose&) const = default;
};

int turned(int heading, bool left);
/// Cell offset of one step along `heading`.
std::array<int, 2> delta(int heading);
/// Pose after `action`.
Pose apply(Pose p, int action);

struct PatrolScene {
  std::array<Pose, kPatrollers> poses{};
};

struct PatrolStep {
  PatrolScene scene;
  std::array<int, kPatrollers> action{};
  double time = 0.0;  // seconds, 1 / kFps apart
};

struct PatrolParams {
  double stop_rate = 0.08;     // chance per step to start a pause
  double reverse_rate = 0.03;  // chance per step to turn around
};

/// Two patrollers loop the hallway independently; each loop direction, start
/// cell, pause and turn-around is seeded. Step 0 carries action stop.
std::vector<PatrolStep> script_patrol_episode(std::uint64_t seed, int length, const PatrolParams& params = {},
                                              const Grid& grid = {});

/// A camera seeing grid columns [x0, x1] in full height.
struct PatrolView {
  int id = 0;
  int x0 = 0, x1 = 0;
  Rgbd floor{}, wall{};
  std::array<Rgbd, kPatrollers> body{};
  Rgbd marker{};

  bool sees(const Pose& p) const { return p.x >= x0 && p.x <= x1; }
};

/// Cam 1 sees columns 0..2 (9 of 26 hallway cells), Cam 2 columns 4..9 (15
/// cells); column 3 is seen by neither.
std::vector<PatrolView> default_patrol_views(const Grid& grid = {});

/// Patrollers in the view are drawn as a body disc with a heading marker and
/// detected with object_id = patroller index; the rest are absent.
Rendered render_patrol(const PatrolScene& scene, const PatrolView& view, std::int64_t height, std::int64_t width,
                       Rng& rng, const Grid& grid = {});

}  // namespace mvsa::patrol
