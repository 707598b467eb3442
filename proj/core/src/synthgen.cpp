#include "ssllanes/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ssllanes {

namespace {

constexpr double kDt = 0.1;        // 10 Hz
constexpr double kAccel = 1.5;     // m/s^2 for accelerate/decelerate scripts
constexpr double kTurnCurvatureFlag = 0.03;  // 1/m; tighter arcs get the turn flag

struct LaneSpec {
  std::vector<Vec2> pts;
  bool intersection = false;
  bool turn = false;
};

struct TemplateGraph {
  std::vector<LaneSpec> lanes;
  std::vector<std::pair<int, int>> connections;  // suc edge: end of a -> start of b
  std::vector<std::pair<int, int>> left_pairs;   // lane b runs parallel-left of lane a
  std::map<std::string, std::vector<int>> routes;
};

std::vector<Vec2> line_points(const Vec2& a, const Vec2& b, double spacing) {
  const double len = distance(a, b);
  const int n = std::max(2, static_cast<int>(std::lround(len / spacing)) + 1);
  std::vector<Vec2> pts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    pts[static_cast<std::size_t>(i)] = a + (b - a) * t;
  }
  return pts;
}

std::vector<Vec2> arc_points(const Vec2& center, double r, double phi0, double phi1,
                             double spacing) {
  const double arc_len = std::abs(phi1 - phi0) * r;
  const int n = std::max(2, static_cast<int>(std::lround(arc_len / spacing)) + 1);
  std::vector<Vec2> pts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double phi = phi0 + (phi1 - phi0) * static_cast<double>(i) / (n - 1);
    pts[static_cast<std::size_t>(i)] = center + Vec2{r * std::cos(phi), r * std::sin(phi)};
  }
  return pts;
}

void drop_first(std::vector<Vec2>& pts) { pts.erase(pts.begin()); }

LaneGraph build_graph(const TemplateGraph& t) {
  LaneGraph g;
  std::vector<int> lane_start(t.lanes.size());
  for (std::size_t li = 0; li < t.lanes.size(); ++li) {
    lane_start[li] = g.num_nodes();
    const LaneSpec& lane = t.lanes[li];
    std::vector<int>& members = g.lane_membership[static_cast<int>(li)];
    for (std::size_t pi = 0; pi < lane.pts.size(); ++pi) {
      const int node = g.num_nodes();
      members.push_back(node);
      g.node_positions.push_back(lane.pts[pi]);
      const Vec2 dir = normalized_or_zero(
          pi + 1 < lane.pts.size() ? lane.pts[pi + 1] - lane.pts[pi]
                                   : lane.pts[pi] - lane.pts[pi - 1]);
      g.node_features.push_back(dir.x);
      g.node_features.push_back(dir.y);
      g.node_features.push_back(lane.intersection ? 1.0 : 0.0);
      g.node_features.push_back(lane.turn ? 1.0 : 0.0);
      g.intersection_flags.push_back(lane.intersection);
      if (pi > 0) g.edges(Relation::suc).emplace_back(node - 1, node);
    }
  }
  for (const auto& [a, b] : t.connections) {
    const int from = lane_start[static_cast<std::size_t>(a)] +
                     static_cast<int>(t.lanes[static_cast<std::size_t>(a)].pts.size()) - 1;
    const int to = lane_start[static_cast<std::size_t>(b)];
    g.edges(Relation::suc).emplace_back(from, to);
  }
  for (const auto& [g_edge, h_edge] : g.edges(Relation::suc))
    g.edges(Relation::pre).emplace_back(h_edge, g_edge);
  for (const auto& [a, b] : t.left_pairs) {
    const std::size_t count = std::min(t.lanes[static_cast<std::size_t>(a)].pts.size(),
                                       t.lanes[static_cast<std::size_t>(b)].pts.size());
    for (std::size_t i = 0; i < count; ++i) {
      const int na = lane_start[static_cast<std::size_t>(a)] + static_cast<int>(i);
      const int nb = lane_start[static_cast<std::size_t>(b)] + static_cast<int>(i);
      g.edges(Relation::left).emplace_back(na, nb);
      g.edges(Relation::right).emplace_back(nb, na);
    }
  }
  return g;
}

TemplateGraph build_straight(double spacing, const LaneTemplateOptions& opts) {
  TemplateGraph t;
  for (int i = 0; i < opts.n_lanes; ++i) {
    LaneSpec lane;
    lane.pts = line_points({0.0, i * kLaneWidth}, {opts.lane_len, i * kLaneWidth}, spacing);
    t.lanes.push_back(std::move(lane));
    t.routes["main" + std::to_string(i)] = {i};
    if (i > 0) t.left_pairs.emplace_back(i - 1, i);
  }
  return t;
}

TemplateGraph build_curve(std::mt19937_64& rng, double spacing,
                          const LaneTemplateOptions& opts) {
  std::uniform_real_distribution<double> radius_dist(85.0, 140.0);
  const double R = radius_dist(rng);
  const double span = opts.lane_len / R;
  const int n = std::max(2, static_cast<int>(std::lround(opts.lane_len / spacing)) + 1);
  TemplateGraph t;
  const Vec2 center{0.0, R};
  for (int i = 0; i < opts.n_lanes; ++i) {
    const double r = R - i * kLaneWidth;
    LaneSpec lane;
    lane.pts.resize(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
      const double theta = span * static_cast<double>(p) / (n - 1);
      lane.pts[static_cast<std::size_t>(p)] =
          center + Vec2{r * std::sin(theta), -r * std::cos(theta)};
    }
    lane.turn = 1.0 / r > kTurnCurvatureFlag;
    t.lanes.push_back(std::move(lane));
    t.routes["main" + std::to_string(i)] = {i};
    if (i > 0) t.left_pairs.emplace_back(i - 1, i);  // inner lane is to the left
  }
  return t;
}

// Right-hand traffic junction, lanes offset half a lane width from the axes.
TemplateGraph build_cross(double spacing, const LaneTemplateOptions& opts) {
  const double j = opts.junction_half, arm = opts.arm_len, off = kLaneWidth / 2.0;
  TemplateGraph t;
  auto add_lane = [&](std::vector<Vec2> pts, bool inter, bool turn) {
    LaneSpec lane;
    lane.pts = std::move(pts);
    lane.intersection = inter;
    lane.turn = turn;
    t.lanes.push_back(std::move(lane));
    return static_cast<int>(t.lanes.size()) - 1;
  };

  const int w_app = add_lane(line_points({-j - arm, -off}, {-j, -off}, spacing), false, false);
  const int e_app = add_lane(line_points({j + arm, off}, {j, off}, spacing), false, false);
  const int n_app = add_lane(line_points({-off, j + arm}, {-off, j}, spacing), false, false);
  const int s_app = add_lane(line_points({off, -j - arm}, {off, -j}, spacing), false, false);

  auto connector = [&](std::vector<Vec2> pts, bool turn) {
    drop_first(pts);  // the entry point belongs to the approach lane
    return add_lane(std::move(pts), true, turn);
  };
  const int we = connector(line_points({-j, -off}, {j, -off}, spacing), false);
  const int ew = connector(line_points({j, off}, {-j, off}, spacing), false);
  const int ns = connector(line_points({-off, j}, {-off, -j}, spacing), false);
  const int sn = connector(line_points({off, -j}, {off, j}, spacing), false);
  const int w_left =
      connector(arc_points({-j, j}, j + off, -M_PI / 2.0, 0.0, spacing), true);
  const int w_right =
      connector(arc_points({-j, -j}, j - off, M_PI / 2.0, 0.0, spacing), true);

  auto exit_lane = [&](std::vector<Vec2> pts) {
    drop_first(pts);  // the junction boundary point belongs to the connector
    return add_lane(std::move(pts), false, false);
  };
  const int e_exit = exit_lane(line_points({j, -off}, {j + arm, -off}, spacing));
  const int w_exit = exit_lane(line_points({-j, off}, {-j - arm, off}, spacing));
  const int n_exit = exit_lane(line_points({off, j}, {off, j + arm}, spacing));
  const int s_exit = exit_lane(line_points({-off, -j}, {-off, -j - arm}, spacing));

  t.connections = {{w_app, we},     {we, e_exit},     {e_app, ew},     {ew, w_exit},
                   {n_app, ns},     {ns, s_exit},     {s_app, sn},     {sn, n_exit},
                   {w_app, w_left}, {w_left, n_exit}, {w_app, w_right}, {w_right, s_exit}};
  t.routes["through"] = {w_app, we, e_exit};
  t.routes["left"] = {w_app, w_left, n_exit};
  t.routes["right"] = {w_app, w_right, s_exit};
  t.routes["bg_ew"] = {e_app, ew, w_exit};
  t.routes["bg_ns"] = {n_app, ns, s_exit};
  t.routes["bg_sn"] = {s_app, sn, n_exit};
  return t;
}

TemplateGraph build_t_intersection(double spacing, const LaneTemplateOptions& opts) {
  const double j = opts.junction_half, arm = opts.arm_len, off = kLaneWidth / 2.0;
  TemplateGraph t;
  auto add_lane = [&](std::vector<Vec2> pts, bool inter, bool turn) {
    LaneSpec lane;
    lane.pts = std::move(pts);
    lane.intersection = inter;
    lane.turn = turn;
    t.lanes.push_back(std::move(lane));
    return static_cast<int>(t.lanes.size()) - 1;
  };
  const int w_app = add_lane(line_points({-j - arm, -off}, {-j, -off}, spacing), false, false);
  const int e_app = add_lane(line_points({j + arm, off}, {j, off}, spacing), false, false);
  const int n_app = add_lane(line_points({-off, j + arm}, {-off, j}, spacing), false, false);

  auto connector = [&](std::vector<Vec2> pts, bool turn) {
    drop_first(pts);
    return add_lane(std::move(pts), true, turn);
  };
  const int we = connector(line_points({-j, -off}, {j, -off}, spacing), false);
  const int ew = connector(line_points({j, off}, {-j, off}, spacing), false);
  const int w_left =
      connector(arc_points({-j, j}, j + off, -M_PI / 2.0, 0.0, spacing), true);
  const int n_to_e =
      connector(arc_points({j, j}, j + off, M_PI, 1.5 * M_PI, spacing), true);

  auto exit_lane = [&](std::vector<Vec2> pts) {
    drop_first(pts);
    return add_lane(std::move(pts), false, false);
  };
  const int e_exit = exit_lane(line_points({j, -off}, {j + arm, -off}, spacing));
  const int w_exit = exit_lane(line_points({-j, off}, {-j - arm, off}, spacing));
  const int n_exit = exit_lane(line_points({off, j}, {off, j + arm}, spacing));

  t.connections = {{w_app, we},     {we, e_exit},     {e_app, ew},      {ew, w_exit},
                   {w_app, w_left}, {w_left, n_exit}, {n_app, n_to_e},  {n_to_e, e_exit}};
  t.routes["through"] = {w_app, we, e_exit};
  t.routes["bg_ew"] = {e_app, ew, w_exit};
  t.routes["bg_ne"] = {n_app, n_to_e, e_exit};
  return t;
}

TemplateGraph build_template(std::mt19937_64& rng, LaneTemplate tmpl, double spacing,
                             const LaneTemplateOptions& opts) {
  switch (tmpl) {
    case LaneTemplate::straight: return build_straight(spacing, opts);
    case LaneTemplate::curve: return build_curve(rng, spacing, opts);
    case LaneTemplate::cross_intersection: return build_cross(spacing, opts);
    case LaneTemplate::t_intersection: return build_t_intersection(spacing, opts);
  }
  throw std::invalid_argument("unknown lane template");
}

double weighted_pick(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    x -= weights[i];
    if (x <= 0.0) return static_cast<double>(i);
  }
  return static_cast<double>(weights.size() - 1);
}

Maneuver sample_maneuver(std::mt19937_64& rng, const std::map<Maneuver, double>& mix) {
  std::vector<Maneuver> keys;
  std::vector<double> weights;
  for (const auto& [m, w] : mix) {
    if (w > 0.0) {
      keys.push_back(m);
      weights.push_back(w);
    }
  }
  if (keys.empty()) throw std::invalid_argument("maneuver_mix has no positive weight");
  return keys[static_cast<std::size_t>(weighted_pick(rng, weights))];
}

std::string sample_region(std::mt19937_64& rng, const std::map<std::string, double>& mix) {
  std::vector<std::string> keys;
  std::vector<double> weights;
  for (const auto& [r, w] : mix) {
    if (w > 0.0) {
      keys.push_back(r);
      weights.push_back(w);
    }
  }
  if (keys.empty()) throw std::invalid_argument("region_mix has no positive weight");
  return keys[static_cast<std::size_t>(weighted_pick(rng, weights))];
}

bool is_turn(Maneuver m) { return m == Maneuver::turn_left || m == Maneuver::turn_right; }

// Polyline of a route, skipping coincident joints between consecutive lanes.
PolylinePath route_path(const TemplateGraph& t, const std::vector<int>& lanes) {
  std::vector<Vec2> pts;
  for (int li : lanes) {
    for (const Vec2& p : t.lanes[static_cast<std::size_t>(li)].pts) {
      if (!pts.empty() && distance(pts.back(), p) < 1e-9) continue;
      pts.push_back(p);
    }
  }
  return PolylinePath(std::move(pts));
}

struct Script {
  PolylinePath path;
  double s_t0 = 0.0;      // arclength at t = 0
  double v0 = 0.0;        // speed at t = 0 (constant over the past)
  double accel = 0.0;     // applied for t > 0
  double lateral_sign = 0.0;   // lane-change direction; 0 = none
  double lateral_span = 0.0;   // seconds to complete the lateral shift
};

Vec2 script_position(const Script& sc, double t, int horizon) {
  double s = sc.s_t0 + sc.v0 * t;
  if (t > 0.0) s += 0.5 * sc.accel * t * t;
  Vec2 p = sc.path.point_at(s);
  if (sc.lateral_sign != 0.0 && t > 0.0) {
    const double tau = std::min(1.0, t / sc.lateral_span);
    const double offset = kLaneWidth * (1.0 - std::cos(M_PI * tau)) / 2.0;
    const Vec2 n = rotated(sc.path.tangent_at(s), M_PI / 2.0);
    p += n * (sc.lateral_sign * offset);
  }
  (void)horizon;
  return p;
}

AgentTrack script_track(const Script& sc, int history_len, int horizon) {
  std::vector<Vec2> past(static_cast<std::size_t>(history_len) + 1);
  std::vector<Vec2> future(static_cast<std::size_t>(horizon));
  for (int i = 0; i <= history_len; ++i)
    past[static_cast<std::size_t>(i)] = script_position(sc, (i - history_len) * kDt, horizon);
  for (int i = 1; i <= horizon; ++i)
    future[static_cast<std::size_t>(i - 1)] = script_position(sc, i * kDt, horizon);
  return AgentTrack::from_positions(std::move(past), std::move(future), {});
}

}  // namespace

const char* to_string(LaneTemplate t) {
  switch (t) {
    case LaneTemplate::straight: return "straight";
    case LaneTemplate::t_intersection: return "t-intersection";
    case LaneTemplate::cross_intersection: return "cross-intersection";
    case LaneTemplate::curve: return "curve";
  }
  return "?";
}

void WorldConfig::validate() const {
  auto check_mix = [](const auto& mix, const char* what) {
    bool any = false;
    for (const auto& [k, w] : mix) {
      if (w < 0.0) throw std::invalid_argument(std::string(what) + ": negative weight");
      any = any || w > 0.0;
    }
    if (!any) throw std::invalid_argument(std::string(what) + ": no positive weight");
  };
  check_mix(maneuver_mix, "maneuver_mix");
  check_mix(region_mix, "region_mix");
  if (node_spacing <= 0.0) throw std::invalid_argument("node_spacing must be > 0");
  if (agents_per_scene.first < 1 || agents_per_scene.second < agents_per_scene.first)
    throw std::invalid_argument("agents_per_scene range invalid");
  if (history_len < 2 || horizon < 1)
    throw std::invalid_argument("history_len must be >= 2 and horizon >= 1");
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("val_fraction must be in [0, 1)");
}

LaneGraph gen_lane_graph(std::uint64_t seed, LaneTemplate tmpl, double spacing,
                         const LaneTemplateOptions& opts) {
  if (spacing <= 0.0) throw std::invalid_argument("gen_lane_graph: spacing must be > 0");
  std::mt19937_64 rng(seed);
  return build_graph(build_template(rng, tmpl, spacing, opts));
}

Scene gen_scene(std::uint64_t seed, const WorldConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  Maneuver maneuver = sample_maneuver(rng, config.maneuver_mix);
  std::string region = sample_region(rng, config.region_mix);
  if (is_turn(maneuver) && region == "B") {
    // region B has no junctions; keep the requested maneuver marginal intact
    auto it = config.region_mix.find("A");
    if (it != config.region_mix.end() && it->second > 0.0) {
      region = "A";
    } else {
      std::map<Maneuver, double> reduced = config.maneuver_mix;
      reduced[Maneuver::turn_left] = 0.0;
      reduced[Maneuver::turn_right] = 0.0;
      maneuver = sample_maneuver(rng, reduced);
    }
  }

  LaneTemplate tmpl;
  if (region == "B") {
    tmpl = LaneTemplate::curve;
  } else if (is_turn(maneuver)) {
    tmpl = LaneTemplate::cross_intersection;
  } else if (maneuver == Maneuver::lane_change) {
    tmpl = LaneTemplate::straight;
  } else {
    const double pick = uniform(0.0, 1.0);
    tmpl = pick < 0.6   ? LaneTemplate::straight
           : pick < 0.85 ? LaneTemplate::cross_intersection
                         : LaneTemplate::t_intersection;
  }

  const std::uint64_t graph_seed = rng();
  std::mt19937_64 graph_rng(graph_seed);
  TemplateGraph tgraph = build_template(graph_rng, tmpl, config.node_spacing, {});
  LaneGraph graph = build_graph(tgraph);

  const int history = config.history_len;
  const int horizon = config.horizon;
  const double t_future = horizon * kDt;
  const double t_past = history * kDt;

  // ---- focus agent script ----
  Script focus;
  focus.lateral_span = t_future;
  std::string route_name;
  if (tmpl == LaneTemplate::straight || tmpl == LaneTemplate::curve) {
    if (maneuver == Maneuver::lane_change) {
      const bool from_outer = uniform(0.0, 1.0) < 0.5;
      route_name = from_outer ? "main0" : "main1";
      focus.lateral_sign = from_outer ? 1.0 : -1.0;  // toward the existing neighbor
    } else {
      route_name = uniform(0.0, 1.0) < 0.5 ? "main0" : "main1";
    }
  } else {
    route_name = maneuver == Maneuver::turn_left    ? "left"
                 : maneuver == Maneuver::turn_right ? "right"
                                                    : "through";
  }
  focus.path = route_path(tgraph, tgraph.routes.at(route_name));

  if (is_turn(maneuver)) {
    focus.v0 = uniform(6.6, 7.5);
  } else if (maneuver == Maneuver::lane_change) {
    focus.v0 = uniform(1.5, 2.2);
  } else {
    focus.v0 = uniform(10.5, 11.5);
  }
  if (maneuver == Maneuver::accelerate) focus.accel = kAccel;
  if (maneuver == Maneuver::decelerate) focus.accel = -kAccel;

  const double past_dist = focus.v0 * t_past;
  double future_dist = focus.v0 * t_future + 0.5 * focus.accel * t_future * t_future;
  if (tmpl == LaneTemplate::cross_intersection || tmpl == LaneTemplate::t_intersection) {
    // place t=0 a few meters before the junction entry
    const double entry = LaneTemplateOptions{}.arm_len;
    const double pre = is_turn(maneuver) ? uniform(2.0, 4.0) : uniform(2.0, 8.0);
    focus.s_t0 = entry - pre;
  } else {
    const double lo = past_dist + 0.5;
    const double hi = focus.path.length() - future_dist - 0.5;
    focus.s_t0 = uniform(lo, std::max(lo + 0.1, hi));
  }

  Scene scene;
  scene.graph = std::move(graph);
  scene.focus_agent = 0;
  scene.agents.push_back(script_track(focus, history, horizon));

  // ---- background agents ----
  std::vector<std::string> route_names;
  for (const auto& [name, lanes] : tgraph.routes) route_names.push_back(name);
  const int n_agents = static_cast<int>(
      std::uniform_int_distribution<int>(config.agents_per_scene.first,
                                         config.agents_per_scene.second)(rng));
  for (int i = 1; i < n_agents; ++i) {
    Script other;
    const auto& rn = route_names[static_cast<std::size_t>(
        std::uniform_int_distribution<std::size_t>(0, route_names.size() - 1)(rng))];
    other.path = route_path(tgraph, tgraph.routes.at(rn));
    other.v0 = uniform(4.0, 12.0);
    const double need = other.v0 * (t_past + t_future) + 1.0;
    if (need >= other.path.length()) continue;  // route too short for this speed
    other.s_t0 = uniform(other.v0 * t_past + 0.5,
                         other.path.length() - other.v0 * t_future - 0.5);
    AgentTrack track = script_track(other, history, horizon);
    if (uniform(0.0, 1.0) < 0.25) {
      // partial history: front-pad and mask
      const int first_observed =
          std::uniform_int_distribution<int>(1, history - 2)(rng);
      for (int l = 0; l < first_observed; ++l) {
        track.past_positions[static_cast<std::size_t>(l)] =
            track.past_positions[static_cast<std::size_t>(first_observed)];
        track.observed_mask[static_cast<std::size_t>(l)] = false;
      }
      track = AgentTrack::from_positions(track.past_positions, track.future_positions,
                                         track.observed_mask);
    }
    scene.agents.push_back(std::move(track));
  }

  // ---- observation noise on past positions ----
  if (config.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (auto& agent : scene.agents) {
      for (auto& p : agent.past_positions) {
        p.x += noise(rng);
        p.y += noise(rng);
      }
      agent = AgentTrack::from_positions(agent.past_positions, agent.future_positions,
                                         agent.observed_mask);
    }
  }

  scene.tags["maneuver"] = to_string(maneuver);
  scene.tags["region"] = region;
  scene.tags["template"] = to_string(tmpl);

  return crop_radius(normalize_scene(scene), config.crop_radius);
}

Dataset gen_dataset(const WorldConfig& config) {
  config.validate();
  std::mt19937_64 seed_rng(config.seed);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.n_scenes));
  for (auto& s : seeds) s = seed_rng();

  Dataset out;
  const int n_val = static_cast<int>(std::lround(config.n_scenes * config.val_fraction));
  const int n_train = config.n_scenes - n_val;
  for (int i = 0; i < config.n_scenes; ++i) {
    Scene scene = gen_scene(seeds[static_cast<std::size_t>(i)], config);
    scene.tags["id"] = std::to_string(i);
    if (i < n_train)
      out.train.push_back(std::move(scene));
    else
      out.val.push_back(std::move(scene));
  }
  return out;
}

}  // namespace ssllanes
