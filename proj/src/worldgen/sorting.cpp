#include "mvsa/worldgen/sorting.hpp"

#include <algorithm>
#include <cmath>

#include "mvsa/core/error.hpp"

namespace mvsa::sorting {

int Layout::region_of(WorldPoint p) const {
  if (p.u < bin_u) return at_bin;
  if (p.w < conveyor_w) return on_conveyor;
  if (p.w < front_w) return in_front;
  return at_home;
}

double SortView::to_x(double u, std::int64_t width) const {
  return (u - u0) / (u1 - u0) * static_cast<double>(width);
}

double SortView::to_y(double w, std::int64_t height) const {
  const double f = (w - w0) / (w1 - w0);
  return (flip_vertical ? 1.0 - f : f) * static_cast<double>(height);
}

WorldPoint SortView::to_world(double x, double y, std::int64_t width, std::int64_t height) const {
  double fy = y / static_cast<double>(height);
  if (flip_vertical) fy = 1.0 - fy;
  return {u0 + x / static_cast<double>(width) * (u1 - u0), w0 + fy * (w1 - w0)};
}

double SortView::conveyor_end_x(std::int64_t width) const {
  return std::min(to_x(1.0, width), static_cast<double>(width));
}

std::vector<SortView> default_views(int num_views) {
  if (num_views < 1) throw ConfigError("sorting needs at least one view");
  std::vector<SortView> views;
  for (int v = 0; v < num_views; ++v) {
    SortView s;
    s.id = v;
    const int k = v % 3;
    const double shrink = 0.02 * (v / 3);
    if (k == 0) {
      s.u0 = shrink;
      s.w0 = shrink;
    } else if (k == 1) {
      s.u0 = 0.04 + shrink;
      s.flip_vertical = true;
    } else {
      s.u1 = 0.96 - shrink;
      s.w0 = 0.03;
    }
    const float tint = 0.03f * static_cast<float>(k);
    s.region_color = {Rgbd{0.52f + tint, 0.48f, 0.42f, 0},   // at_home
                      Rgbd{0.40f, 0.42f + tint, 0.47f, 0},   // on_conveyor
                      Rgbd{0.47f, 0.52f, 0.45f + tint, 0},   // in_front
                      Rgbd{0.45f + tint, 0.38f, 0.36f, 0}};  // at_bin
    s.onion = {0.80f, 0.62f, 0.36f, 0};
    s.blemish = {0.36f, 0.36f, 0.35f, 0};
    s.hand = {0.72f, 0.50f, 0.58f, 0};
    s.occluder = {0.38f, 0.36f, 0.40f, 0};
    views.push_back(s);
  }
  return views;
}

namespace {

double dist(WorldPoint a, WorldPoint b) { return std::hypot(a.u - b.u, a.w - b.w); }

bool step_towards(WorldPoint& p, WorldPoint goal, double speed) {
  const double d = dist(p, goal);
  if (d <= speed) {
    p = goal;
    return true;
  }
  p.u += (goal.u - p.u) / d * speed;
  p.w += (goal.w - p.w) / d * speed;
  return false;
}

std::vector<bool> visibility_mask(int views, bool single, Rng& rng) {
  std::vector<bool> mask(static_cast<std::size_t>(views), false);
  if (single || views == 1) {
    mask[rng.below(static_cast<std::uint64_t>(views))] = true;
    return mask;
  }
  // Uniform over the 2^V - 2 non-empty strict subsets.
  const std::uint64_t bits = 1 + rng.below((std::uint64_t{1} << views) - 2);
  for (int v = 0; v < views; ++v) mask[static_cast<std::size_t>(v)] = ((bits >> v) & 1U) != 0;
  return mask;
}

void advance_occluders(std::vector<Occluder>& occ, double rate, Rng& rng) {
  for (auto& o : occ) {
    if (o.active) {
      o.x0 += o.velocity;
      o.x1 += o.velocity;
      if (--o.remaining <= 0 || o.x1 <= 0.0 || o.x0 >= 1.0) o.active = false;
      continue;
    }
    if (!rng.bernoulli(rate)) continue;
    const double width = rng.uniform(0.30, 0.45);
    const double speed = rng.uniform(0.06, 0.14);
    const bool from_left = rng.bernoulli(0.5);
    o.active = true;
    o.x0 = from_left ? -0.5 * width : 1.0 - 0.5 * width;
    o.x1 = o.x0 + width;
    o.velocity = from_left ? speed : -speed;
    o.remaining = rng.uniform_int(5, 9);
  }
}

}  // namespace

std::vector<Step> script_episode(std::uint64_t seed, int num_onions, const ScriptParams& params,
                                 const Layout& layout) {
  if (num_onions < 1) throw ConfigError("script_episode: num_onions must be >= 1");
  if (params.num_views < 1) throw ConfigError("script_episode: num_views must be >= 1");
  Rng rng(seed);
  const WorldPoint pick{0.86, 0.17}, home{0.62, 0.85}, front{0.60, 0.52};
  // The next onion waits upstream, far enough from every hand path that the
  // detector rules can tell the handled onion apart.
  const WorldPoint waiting{0.30, 0.08};

  Scene sc;
  for (int i = 0; i < num_onions; ++i) {
    Onion o;
    o.id = i;
    o.blemished = rng.bernoulli(params.blemish_rate);
    o.blemish_visible.assign(static_cast<std::size_t>(params.num_views), false);
    if (o.blemished) o.blemish_visible = visibility_mask(params.num_views, params.blemish_single_view, rng);
    o.present = i < 2;
    o.pos = i == 0 ? pick : waiting;
    sc.onions.push_back(o);
  }
  sc.occluders.assign(static_cast<std::size_t>(params.num_views), Occluder{});
  sc.hand = {home.u + rng.uniform(-0.03, 0.03), home.w + rng.uniform(-0.03, 0.03)};

  std::vector<Step> steps;
  const auto full = [&] { return params.max_steps > 0 && static_cast<int>(steps.size()) >= params.max_steps; };
  const auto speed = [&] { return params.speed * rng.uniform(0.85, 1.15); };
  const auto emit = [&](int action) {
    advance_occluders(sc.occluders, params.occlusion_rate, rng);
    Onion& t = sc.onions[static_cast<std::size_t>(sc.target)];
    if (sc.held) t.pos = sc.hand;
    Step s;
    s.scene = sc;
    s.onion_location = layout.region_of(t.pos);
    s.eff_location = layout.region_of(sc.hand);
    s.status = t.blemished ? Status::blemished : Status::unblemished;
    s.action = action;
    steps.push_back(std::move(s));
  };

  for (int i = 0; i < num_onions && !full(); ++i) {
    // The conveyor advances: the placed onion is gone, the waiting one
    // reaches the pick spot and the next one queues behind it.
    if (i > 0) sc.onions[static_cast<std::size_t>(i - 1)].present = false;
    sc.target = i;
    Onion& onion = sc.onions[static_cast<std::size_t>(i)];
    onion.present = true;
    onion.pos = pick;
    if (i + 1 < num_onions) {
      sc.onions[static_cast<std::size_t>(i + 1)].present = true;
      sc.onions[static_cast<std::size_t>(i + 1)].pos = waiting;
    }
    sc.held = false;
    // claim: reach the onion, then carry it home
    while (!full()) {
      const bool arrived = step_towards(sc.hand, onion.pos, speed());
      if (arrived) sc.held = true;
      emit(claim);
      if (arrived) break;
    }
    while (!full() && !step_towards(sc.hand, home, speed())) emit(claim);
    if (!full()) emit(claim);
    // inspect: lift in front and hold
    while (!full() && !step_towards(sc.hand, front, speed())) emit(inspect);
    if (!full()) emit(inspect);
    for (int k = 0; k < 2 && !full(); ++k) {
      sc.hand = {front.u + rng.uniform(-0.025, 0.025), front.w + rng.uniform(-0.025, 0.025)};
      emit(inspect);
    }
    // place
    const int action = onion.blemished ? place_in_bin : place_on_conveyor;
    const WorldPoint drop = onion.blemished ? WorldPoint{0.11, rng.uniform(0.50, 0.75)} : WorldPoint{0.78, 0.17};
    while (!full() && !step_towards(sc.hand, drop, speed())) emit(action);
    if (!full()) {
      emit(action);
      sc.held = false;
    }
  }
  return steps;
}

namespace {

constexpr float kRegionDepth[4] = {0.55f, 0.45f, 0.30f, 0.75f};

bool occluded(const Scene& scene, int view, double x, std::int64_t width) {
  const Occluder& o = scene.occluders[static_cast<std::size_t>(view)];
  const double fx = x / static_cast<double>(width);
  return o.active && fx >= o.x0 && fx < o.x1;
}

}  // namespace

Rendered render(const Scene& scene, const SortView& view, std::int64_t height, std::int64_t width, Rng& rng,
                const RenderParams& params, const Layout& layout) {
  if (view.id < 0 || view.id >= static_cast<int>(scene.occluders.size())) {
    throw ConfigError("render: scene has no view " + std::to_string(view.id));
  }
  const auto check_inside = [&](WorldPoint p, const char* what) {
    const double x = view.to_x(p.u, width), y = view.to_y(p.w, height);
    if (!(x >= 0 && x < static_cast<double>(width) && y >= 0 && y < static_cast<double>(height))) {
      throw ConfigError(std::string("render: ") + what + " placed outside view " + std::to_string(view.id));
    }
  };
  check_inside(scene.hand, "hand");
  for (const auto& o : scene.onions) {
    if (o.present) check_inside(o.pos, "onion");
  }
  Canvas cv(height, width);
  Tensor depth_bg(Shape{height, width});
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const int r = layout.region_of(view.to_world(x + 0.5, y + 0.5, width, height));
      Rgbd c = view.region_color[static_cast<std::size_t>(r)];
      const double d = kRegionDepth[r] + 0.1 * (y + 0.5) / static_cast<double>(height) +
                       params.depth_jitter * rng.normal();
      c.d = static_cast<float>(std::clamp(d, 0.0, 1.0));
      depth_bg.at(y, x) = c.d;
      cv.put(x, y, c);
    }
  }
  const auto bg_depth = [&](double x, double y) {
    const auto xi = std::clamp<std::int64_t>(static_cast<std::int64_t>(x), 0, width - 1);
    const auto yi = std::clamp<std::int64_t>(static_cast<std::int64_t>(y), 0, height - 1);
    return depth_bg.at(yi, xi);
  };

  Rendered out;
  const double hx = view.to_x(scene.hand.u, width), hy = view.to_y(scene.hand.w, height);
  Rgbd hand = view.hand;
  hand.d = std::clamp(bg_depth(hx, hy) - 0.10f, 0.0f, 1.0f);
  const auto hand_box = cv.fill_disc(hx, hy, params.hand_radius * static_cast<double>(width), hand);

  const double r = params.onion_radius * static_cast<double>(width);
  struct Drawn {
    const Onion* onion;
    std::array<std::int64_t, 4> box;
    double cx;
  };
  std::vector<Drawn> drawn;
  // Target last so a held onion sits on top of the hand.
  std::vector<const Onion*> order;
  for (const auto& o : scene.onions) {
    if (o.present && o.id != scene.target) order.push_back(&o);
  }
  order.push_back(&scene.onions[static_cast<std::size_t>(scene.target)]);
  for (const Onion* o : order) {
    if (!o->present) continue;
    const double cx = view.to_x(o->pos.u, width), cy = view.to_y(o->pos.w, height);
    Rgbd c = view.onion;
    c.d = std::clamp(bg_depth(cx, cy) - 0.06f, 0.0f, 1.0f);
    const auto box = cv.fill_disc(cx, cy, r, c);
    if (o->blemished && o->blemish_visible[static_cast<std::size_t>(view.id)]) {
      Rgbd b = view.blemish;
      b.d = c.d;
      cv.fill_disc(cx, cy, 0.55 * r, b);
    }
    drawn.push_back({o, box, cx});
  }

  const Occluder& occ = scene.occluders[static_cast<std::size_t>(view.id)];
  if (occ.active) {
    Rgbd c = view.occluder;
    c.d = 0.05f;
    cv.fill_rect(occ.x0 * static_cast<double>(width), 0, occ.x1 * static_cast<double>(width),
                 static_cast<double>(height), c);
  }

  for (const Drawn& d : drawn) {
    if (d.box[2] <= d.box[0] || occluded(scene, view.id, d.cx, width)) continue;
    Detection det;
    const bool blemish_seen = d.onion->blemished && d.onion->blemish_visible[static_cast<std::size_t>(view.id)];
    det.label = blemish_seen ? ObjectClass::blemished : ObjectClass::unblemished;
    det.confidence = rng.uniform(0.8, 0.99);
    det.box = {static_cast<double>(d.box[0]), static_cast<double>(d.box[1]), static_cast<double>(d.box[2]),
               static_cast<double>(d.box[3])};
    det.view = view.id;
    det.object_id = d.onion->id;
    out.truth.push_back(det);
  }
  if (hand_box[2] > hand_box[0] && !occluded(scene, view.id, hx, width)) {
    Detection det;
    det.label = ObjectClass::effector;
    det.confidence = rng.uniform(0.8, 0.99);
    det.box = {static_cast<double>(hand_box[0]), static_cast<double>(hand_box[1]), static_cast<double>(hand_box[2]),
               static_cast<double>(hand_box[3])};
    det.view = view.id;
    det.object_id = -1;
    out.truth.push_back(det);
  }
  out.frame = std::move(cv.frame());
  return out;
}

}  // namespace mvsa::sorting
