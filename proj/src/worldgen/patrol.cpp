#include "mvsa/worldgen/patrol.hpp"

#include <algorithm>

#include "mvsa/core/error.hpp"

namespace mvsa::patrol {

int turned(int heading, bool left) {
  switch (heading) {
    case north: return left ? west : east;
    case south: return left ? east : west;
    case east: return left ? north : south;
    default: return left ? south : north;
  }
}

std::array<int, 2> delta(int heading) {
  switch (heading) {
    case north: return {0, 1};
    case south: return {0, -1};
    case east: return {1, 0};
    default: return {-1, 0};
  }
}

Pose apply(Pose p, int action) {
  switch (action) {
    case move_forward: {
      const auto d = delta(p.heading);
      p.x += d[0];
      p.y += d[1];
      break;
    }
    case turn_right: p.heading = turned(p.heading, false); break;
    case turn_left: p.heading = turned(p.heading, true); break;
    default: break;
  }
  return p;
}

namespace {

// Heading along the ring at (x, y) for a counter-clockwise (left-turning) loop,
// or clockwise when `ccw` is false.
int ring_heading(const Grid& g, int x, int y, bool ccw) {
  if (ccw) {
    if (y == 0 && x < g.nx - 1) return east;
    if (x == g.nx - 1 && y < g.ny - 1) return north;
    if (y == g.ny - 1 && x > 0) return west;
    return south;
  }
  if (y == 0 && x > 0) return west;
  if (x == 0 && y < g.ny - 1) return north;
  if (y == g.ny - 1 && x < g.nx - 1) return east;
  return south;
}

struct Walker {
  Pose pose;
  bool ccw = true;
  int pause = 0;
  int turning_around = 0;
};

}  // namespace

std::vector<PatrolStep> script_patrol_episode(std::uint64_t seed, int length, const PatrolParams& params,
                                              const Grid& grid) {
  if (length < 5) throw ConfigError("script_patrol_episode: length must be >= 5");
  if (grid.nx < 3 || grid.ny < 3) throw ConfigError("script_patrol_episode: grid must be at least 3x3");
  Rng rng(seed);
  std::vector<std::array<int, 2>> ring;
  for (int x = 0; x < grid.nx; ++x) {
    for (int y = 0; y < grid.ny; ++y) {
      if (grid.free(x, y)) ring.push_back({x, y});
    }
  }
  std::array<Walker, kPatrollers> walkers;
  for (int k = 0; k < kPatrollers; ++k) {
    auto& w = walkers[static_cast<std::size_t>(k)];
    for (;;) {
      const auto c = ring[rng.below(ring.size())];
      if (k == 1 && c[0] == walkers[0].pose.x && c[1] == walkers[0].pose.y) continue;
      w.ccw = rng.bernoulli(0.5);
      w.pose = {c[0], c[1], ring_heading(grid, c[0], c[1], w.ccw)};
      break;
    }
  }

  std::vector<PatrolStep> steps;
  PatrolStep first;
  for (int k = 0; k < kPatrollers; ++k) {
    first.scene.poses[static_cast<std::size_t>(k)] = walkers[static_cast<std::size_t>(k)].pose;
    first.action[static_cast<std::size_t>(k)] = stop;
  }
  steps.push_back(first);
  for (int t = 1; t < length; ++t) {
    PatrolStep s;
    s.time = static_cast<double>(t) / kFps;
    for (int k = 0; k < kPatrollers; ++k) {
      auto& w = walkers[static_cast<std::size_t>(k)];
      const Pose& other = walkers[static_cast<std::size_t>(1 - k)].pose;
      int action = stop;
      if (w.turning_around > 0) {
        action = w.ccw ? turn_left : turn_right;
        if (--w.turning_around == 0) w.ccw = !w.ccw;
      } else if (w.pause > 0) {
        --w.pause;
      } else if (rng.bernoulli(params.stop_rate)) {
        w.pause = rng.uniform_int(0, 3);
      } else if (rng.bernoulli(params.reverse_rate)) {
        action = w.ccw ? turn_left : turn_right;
        w.turning_around = 1;
      } else {
        const auto d = delta(w.pose.heading);
        const int nx = w.pose.x + d[0], ny = w.pose.y + d[1];
        if (!grid.free(nx, ny)) {
          action = w.ccw ? turn_left : turn_right;
        } else if (nx == other.x && ny == other.y) {
          // Blocked by the other patroller: turn around.
          action = w.ccw ? turn_left : turn_right;
          w.turning_around = 1;
        } else {
          action = move_forward;
        }
      }
      w.pose = apply(w.pose, action);
      s.scene.poses[static_cast<std::size_t>(k)] = w.pose;
      s.action[static_cast<std::size_t>(k)] = action;
    }
    steps.push_back(s);
  }
  return steps;
}

std::vector<PatrolView> default_patrol_views(const Grid& grid) {
  if (grid.nx < 5) throw ConfigError("default_patrol_views: grid needs at least 5 columns");
  const int split = std::max(1, (grid.nx - 1) / 3);
  PatrolView cam1;
  cam1.id = 0;
  cam1.x0 = 0;
  cam1.x1 = split - 1;
  cam1.floor = {0.62f, 0.60f, 0.55f, 0.6f};
  cam1.wall = {0.35f, 0.37f, 0.42f, 0.3f};
  cam1.body = {Rgbd{0.15f, 0.15f, 0.18f, 0.45f}, Rgbd{0.20f, 0.14f, 0.12f, 0.45f}};
  cam1.marker = {0.9f, 0.85f, 0.2f, 0.42f};
  PatrolView cam2 = cam1;
  cam2.id = 1;
  // Column `split` is covered by neither camera.
  cam2.x0 = split + 1;
  cam2.x1 = grid.nx - 1;
  cam2.floor = {0.55f, 0.58f, 0.62f, 0.6f};
  cam2.wall = {0.40f, 0.33f, 0.33f, 0.3f};
  return {cam1, cam2};
}

Rendered render_patrol(const PatrolScene& scene, const PatrolView& view, std::int64_t height, std::int64_t width,
                       Rng& rng, const Grid& grid) {
  const int cols = view.x1 - view.x0 + 1;
  if (cols < 1) throw ConfigError("render_patrol: empty view");
  const double cw = static_cast<double>(width) / cols;
  const double ch = static_cast<double>(height) / grid.ny;
  Canvas cv(height, width);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const int gx = view.x0 + static_cast<int>((x + 0.5) / cw);
      // Image rows grow downward, grid y grows northward.
      const int gy = grid.ny - 1 - static_cast<int>((y + 0.5) / ch);
      Rgbd c = grid.free(gx, gy) ? view.floor : view.wall;
      c.d = std::clamp(c.d + static_cast<float>(0.01 * rng.normal()), 0.0f, 1.0f);
      cv.put(x, y, c);
    }
  }
  Rendered out;
  const double radius = 0.35 * std::min(cw, ch);
  for (int k = 0; k < kPatrollers; ++k) {
    const Pose& p = scene.poses[static_cast<std::size_t>(k)];
    if (!grid.free(p.x, p.y)) throw ConfigError("render_patrol: patroller off the hallway");
    if (!view.sees(p)) continue;
    const double cx = (p.x - view.x0 + 0.5) * cw;
    const double cy = (grid.ny - 1 - p.y + 0.5) * ch;
    auto box = cv.fill_disc(cx, cy, radius, view.body[static_cast<std::size_t>(k)]);
    const auto d = delta(p.heading);
    const auto m = cv.fill_disc(cx + 0.55 * radius * d[0], cy - 0.55 * radius * d[1], 0.35 * radius, view.marker);
    if (m[2] > m[0]) {
      box = {std::min(box[0], m[0]), std::min(box[1], m[1]), std::max(box[2], m[2]), std::max(box[3], m[3])};
    }
    Detection det;
    det.label = ObjectClass::patroller;
    det.confidence = rng.uniform(0.8, 0.99);
    det.box = {static_cast<double>(box[0]), static_cast<double>(box[1]), static_cast<double>(box[2]),
               static_cast<double>(box[3])};
    det.view = view.id;
    det.object_id = k;
    out.truth.push_back(det);
  }
  out.frame = std::move(cv.frame());
  return out;
}

}  // namespace mvsa::patrol
