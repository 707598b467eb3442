#include "ssllanes/pseudolabels.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ssllanes {

namespace {

constexpr double kLaneChangeAngle = 20.0 * M_PI / 180.0;
constexpr double kLaneWidthForRules = 3.5;
constexpr double kDt = 0.1;

}  // namespace

std::pair<std::vector<double>, MaskSpec> mask_lanes(const LaneGraph& graph, double m_a,
                                                    std::uint64_t seed) {
  if (m_a < 0.0 || m_a > 1.0)
    throw std::invalid_argument("mask_lanes: ratio must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<double> perturbed = graph.node_features;
  MaskSpec spec;
  spec.ratio = m_a;
  if (m_a == 0.0) return {std::move(perturbed), std::move(spec)};

  for (const auto& [lane_id, nodes] : graph.lane_membership) {
    const int n = static_cast<int>(nodes.size());
    if (n == 0) continue;
    int count = static_cast<int>(std::lround(m_a * n));
    count = std::max(1, std::min(n, count));
    std::vector<int> order = nodes;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(count));
    std::sort(order.begin(), order.end());
    spec.masked_per_lane[lane_id] = order;
  }
  for (const auto& [lane_id, nodes] : spec.masked_per_lane) {
    for (int node : nodes) {
      spec.masked_nodes.push_back(node);
      for (int f = 0; f < kNodeFeatureDim; ++f) {
        spec.target_features.push_back(graph.feature(node, f));
        perturbed[static_cast<std::size_t>(node) * kNodeFeatureDim + f] = 0.0;
      }
    }
  }
  return {std::move(perturbed), std::move(spec)};
}

DistanceLabels bfs_distance_to_intersection(const LaneGraph& graph) {
  const int m = graph.num_nodes();
  bool any = false;
  for (bool b : graph.intersection_flags) any = any || b;
  if (!any)
    throw std::runtime_error(
        "bfs_distance_to_intersection: graph has no intersection nodes");

  std::vector<std::vector<int>> undirected(static_cast<std::size_t>(m));
  for (int r = 0; r < kNumRelations; ++r) {
    for (const auto& [g, h] : graph.adjacency[static_cast<std::size_t>(r)]) {
      undirected[static_cast<std::size_t>(g)].push_back(h);
      undirected[static_cast<std::size_t>(h)].push_back(g);
    }
  }

  DistanceLabels out;
  out.d.assign(static_cast<std::size_t>(m), 0.0);
  out.reachable.assign(static_cast<std::size_t>(m), false);
  std::deque<int> queue;
  for (int n = 0; n < m; ++n) {
    if (graph.intersection_flags[static_cast<std::size_t>(n)]) {
      out.reachable[static_cast<std::size_t>(n)] = true;
      queue.push_back(n);
    }
  }
  while (!queue.empty()) {
    const int n = queue.front();
    queue.pop_front();
    for (int nb : undirected[static_cast<std::size_t>(n)]) {
      if (out.reachable[static_cast<std::size_t>(nb)]) continue;
      out.reachable[static_cast<std::size_t>(nb)] = true;
      out.d[static_cast<std::size_t>(nb)] = out.d[static_cast<std::size_t>(n)] + 1.0;
      queue.push_back(nb);
    }
  }
  return out;
}

ClusterResult constrained_kmeans(const std::vector<Vec2>& points, int k, int min_size,
                                 std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw std::invalid_argument("constrained_kmeans: k must be >= 1");
  if (min_size < 0) throw std::invalid_argument("constrained_kmeans: min_size must be >= 0");
  if (n < k || n < k * min_size)
    throw std::invalid_argument("constrained_kmeans: infeasible constraints (n=" +
                                std::to_string(n) + ", k=" + std::to_string(k) +
                                ", min_size=" + std::to_string(min_size) + ")");

  std::mt19937_64 rng(seed);
  auto d2 = [&](const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
  };

  // k-means++ seeding
  std::vector<Vec2> centroids;
  centroids.push_back(points[std::uniform_int_distribution<std::size_t>(
      0, static_cast<std::size_t>(n) - 1)(rng)]);
  std::vector<double> best_d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = d2(points[static_cast<std::size_t>(i)], centroids[0]);
      for (std::size_t c = 1; c < centroids.size(); ++c)
        best = std::min(best, d2(points[static_cast<std::size_t>(i)], centroids[c]));
      best_d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double x = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (int i = 0; i < n; ++i) {
        x -= best_d2[static_cast<std::size_t>(i)];
        if (x <= 0.0) {
          pick = static_cast<std::size_t>(i);
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(
          0, static_cast<std::size_t>(n) - 1)(rng);
    }
    centroids.push_back(points[pick]);
  }

  auto objective_of = [&](const std::vector<int>& assign) {
    double j = 0.0;
    for (int i = 0; i < n; ++i)
      j += d2(points[static_cast<std::size_t>(i)],
              centroids[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]);
    return j;
  };

  auto assign_step = [&]() {
    std::vector<int> assign(static_cast<std::size_t>(n));
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = d2(points[static_cast<std::size_t>(i)], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double dd = d2(points[static_cast<std::size_t>(i)],
                             centroids[static_cast<std::size_t>(c)]);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      sizes[static_cast<std::size_t>(best)]++;
    }
    // repair: feed undersized clusters from donors with spare members,
    // moving the point with the smallest cost increase
    while (true) {
      int receiver = -1;
      for (int c = 0; c < k; ++c)
        if (sizes[static_cast<std::size_t>(c)] < min_size &&
            (receiver < 0 ||
             sizes[static_cast<std::size_t>(c)] < sizes[static_cast<std::size_t>(receiver)]))
          receiver = c;
      if (receiver < 0) break;
      int move = -1;
      double best_delta = 0.0;
      for (int i = 0; i < n; ++i) {
        const int cur = assign[static_cast<std::size_t>(i)];
        if (cur == receiver || sizes[static_cast<std::size_t>(cur)] <= min_size) continue;
        const double delta =
            d2(points[static_cast<std::size_t>(i)],
               centroids[static_cast<std::size_t>(receiver)]) -
            d2(points[static_cast<std::size_t>(i)], centroids[static_cast<std::size_t>(cur)]);
        if (move < 0 || delta < best_delta) {
          move = i;
          best_delta = delta;
        }
      }
      if (move < 0)
        throw std::runtime_error("constrained_kmeans: repair found no donor");
      sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(move)])]--;
      assign[static_cast<std::size_t>(move)] = receiver;
      sizes[static_cast<std::size_t>(receiver)]++;
    }
    return assign;
  };

  ClusterResult result;
  result.assignments = assign_step();
  double current = objective_of(result.assignments);
  for (int iter = 0; iter < 100; ++iter) {
    result.iterations = iter + 1;
    // centroid update never increases the objective
    std::vector<Vec2> sums(static_cast<std::size_t>(k));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = result.assignments[static_cast<std::size_t>(i)];
      sums[static_cast<std::size_t>(c)] += points[static_cast<std::size_t>(i)];
      counts[static_cast<std::size_t>(c)]++;
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centroids[static_cast<std::size_t>(c)] =
            sums[static_cast<std::size_t>(c)] * (1.0 / counts[static_cast<std::size_t>(c)]);
    current = objective_of(result.assignments);
    result.objective_trace.push_back(current);

    std::vector<int> next = assign_step();
    if (next == result.assignments) break;
    // keep monotonicity: only adopt an assignment that does not increase J
    std::vector<int> saved = result.assignments;
    result.assignments = next;
    const double j_next = objective_of(result.assignments);
    if (j_next > current) {
      result.assignments = std::move(saved);
      break;
    }
    current = j_next;
  }
  result.centroids = centroids;
  result.objective = current;
  return result;
}

namespace {

struct EndpointCase {
  int scene_index = 0;
  Vec2 endpoint;       // E - p0 in the agent frame
  bool lateral = false;
  bool lane_change = false;
};

std::vector<Vec2> lane_polyline(const LaneGraph& g, const std::vector<int>& nodes) {
  std::vector<Vec2> pts;
  pts.reserve(nodes.size());
  for (int n : nodes) pts.push_back(g.node_positions[static_cast<std::size_t>(n)]);
  return pts;
}

EndpointCase endpoint_case(const Scene& scene, int scene_index) {
  const AgentTrack& focus = scene.focus();
  EndpointCase ec;
  ec.scene_index = scene_index;
  const Vec2 p0 = focus.current_position();
  const Vec2 endpoint = focus.future_positions.back();
  ec.endpoint = endpoint - p0;
  ec.lateral = angle_from_x_axis(ec.endpoint) > kLaneChangeAngle;
  if (!ec.lateral) return ec;

  // lane-change test: lateral offset from the start lane grew by at least half
  // a lane width AND the nearest centerline at the endpoint still runs along +x
  double best_start = std::numeric_limits<double>::infinity();
  const std::vector<int>* start_lane = nullptr;
  for (const auto& [lane_id, nodes] : scene.graph.lane_membership) {
    const double dist = point_polyline_distance(p0, lane_polyline(scene.graph, nodes));
    if (dist < best_start) {
      best_start = dist;
      start_lane = &nodes;
    }
  }
  if (start_lane == nullptr) return ec;
  const auto start_pts = lane_polyline(scene.graph, *start_lane);
  const double offset_change =
      point_polyline_distance(endpoint, start_pts) - point_polyline_distance(p0, start_pts);

  int nearest = -1;
  double best_node = std::numeric_limits<double>::infinity();
  for (int n = 0; n < scene.graph.num_nodes(); ++n) {
    const double dist = distance(endpoint, scene.graph.node_positions[static_cast<std::size_t>(n)]);
    if (dist < best_node) {
      best_node = dist;
      nearest = n;
    }
  }
  bool orientation_ok = false;
  if (nearest >= 0) {
    const Vec2 dir{scene.graph.feature(nearest, 0), scene.graph.feature(nearest, 1)};
    orientation_ok = angle_from_x_axis(dir) <= kLaneChangeAngle;
  }
  ec.lane_change = offset_change >= kLaneWidthForRules / 2.0 && orientation_ok;
  return ec;
}

// Longitudinal fallback when the group is too small to cluster: compare the
// endpoint's forward distance against a constant-speed extrapolation.
int longitudinal_rule(const Scene& scene) {
  const AgentTrack& focus = scene.focus();
  const double speed = norm(focus.past_displacements.back()) / kDt;
  const double expected = speed * static_cast<double>(focus.future_positions.size()) * kDt;
  const double got = focus.future_positions.back().x - focus.current_position().x;
  if (got > expected + 3.0) return static_cast<int>(Maneuver::accelerate);
  if (got < expected - 3.0) return static_cast<int>(Maneuver::decelerate);
  return static_cast<int>(Maneuver::maintain_speed);
}

// Canonical point order so clustering is invariant to scene order.
void sort_cases(std::vector<EndpointCase>& cases) {
  std::sort(cases.begin(), cases.end(), [](const EndpointCase& a, const EndpointCase& b) {
    if (a.endpoint.x != b.endpoint.x) return a.endpoint.x < b.endpoint.x;
    if (a.endpoint.y != b.endpoint.y) return a.endpoint.y < b.endpoint.y;
    return a.scene_index < b.scene_index;
  });
}

}  // namespace

ManeuverLabels label_maneuvers(const std::vector<Scene>& scenes, std::uint64_t seed) {
  ManeuverLabels out;
  out.labels.assign(scenes.size(), -1);

  std::vector<EndpointCase> lateral_pool, longitudinal_pool;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    if (!s.focus().has_future()) continue;  // skipped
    EndpointCase ec = endpoint_case(s, static_cast<int>(i));
    if (ec.lane_change) {
      out.labels[i] = static_cast<int>(Maneuver::lane_change);
    } else if (ec.lateral) {
      lateral_pool.push_back(ec);
    } else {
      longitudinal_pool.push_back(ec);
    }
  }

  if (static_cast<int>(lateral_pool.size()) >= 2) {
    sort_cases(lateral_pool);
    std::vector<Vec2> pts;
    for (const auto& ec : lateral_pool) pts.push_back(ec.endpoint);
    const int min_size = static_cast<int>(pts.size()) / 2;
    ClusterResult clusters = constrained_kmeans(pts, 2, min_size, seed);
    // turn-left is the +y side of the agent frame
    const int left_cluster = clusters.centroids[0].y >= clusters.centroids[1].y ? 0 : 1;
    for (std::size_t i = 0; i < lateral_pool.size(); ++i) {
      const bool left = clusters.assignments[i] == left_cluster;
      out.labels[static_cast<std::size_t>(lateral_pool[i].scene_index)] =
          static_cast<int>(left ? Maneuver::turn_left : Maneuver::turn_right);
    }
    out.centroids[static_cast<int>(Maneuver::turn_left)] =
        clusters.centroids[static_cast<std::size_t>(left_cluster)];
    out.centroids[static_cast<int>(Maneuver::turn_right)] =
        clusters.centroids[static_cast<std::size_t>(1 - left_cluster)];
  } else {
    for (const auto& ec : lateral_pool)
      out.labels[static_cast<std::size_t>(ec.scene_index)] = static_cast<int>(
          ec.endpoint.y >= 0.0 ? Maneuver::turn_left : Maneuver::turn_right);
  }

  if (static_cast<int>(longitudinal_pool.size()) >= 3) {
    sort_cases(longitudinal_pool);
    std::vector<Vec2> pts;
    for (const auto& ec : longitudinal_pool) pts.push_back({ec.endpoint.x, 0.0});
    const int min_size = static_cast<int>(pts.size()) / 3;
    ClusterResult clusters = constrained_kmeans(pts, 3, min_size, seed ^ 0x5bd1e995u);
    // name clusters by forward-distance ordering
    std::vector<int> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return clusters.centroids[static_cast<std::size_t>(a)].x <
             clusters.centroids[static_cast<std::size_t>(b)].x;
    });
    std::vector<int> name_of(3);
    name_of[static_cast<std::size_t>(order[0])] = static_cast<int>(Maneuver::decelerate);
    name_of[static_cast<std::size_t>(order[1])] = static_cast<int>(Maneuver::maintain_speed);
    name_of[static_cast<std::size_t>(order[2])] = static_cast<int>(Maneuver::accelerate);
    for (std::size_t i = 0; i < longitudinal_pool.size(); ++i)
      out.labels[static_cast<std::size_t>(longitudinal_pool[i].scene_index)] =
          name_of[static_cast<std::size_t>(clusters.assignments[i])];
    for (int c = 0; c < 3; ++c)
      out.centroids[name_of[static_cast<std::size_t>(c)]] =
          clusters.centroids[static_cast<std::size_t>(c)];
  } else {
    for (const auto& ec : longitudinal_pool)
      out.labels[static_cast<std::size_t>(ec.scene_index)] =
          longitudinal_rule(scenes[static_cast<std::size_t>(ec.scene_index)]);
  }
  return out;
}

int assign_maneuver(const ManeuverLabels& fitted, const Scene& scene) {
  if (!scene.focus().has_future()) return -1;
  EndpointCase ec = endpoint_case(scene, 0);
  if (ec.lane_change) return static_cast<int>(Maneuver::lane_change);

  auto nearest_of = [&](std::initializer_list<Maneuver> options, const Vec2& p) {
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (Maneuver m : options) {
      auto it = fitted.centroids.find(static_cast<int>(m));
      if (it == fitted.centroids.end()) continue;
      const double dist = distance(p, it->second);
      if (dist < bd) {
        bd = dist;
        best = static_cast<int>(m);
      }
    }
    return best;
  };

  if (ec.lateral) {
    const int got = nearest_of({Maneuver::turn_left, Maneuver::turn_right}, ec.endpoint);
    if (got >= 0) return got;
    return static_cast<int>(ec.endpoint.y >= 0.0 ? Maneuver::turn_left
                                                 : Maneuver::turn_right);
  }
  const int got = nearest_of(
      {Maneuver::maintain_speed, Maneuver::accelerate, Maneuver::decelerate},
      {ec.endpoint.x, 0.0});
  if (got >= 0) return got;
  return longitudinal_rule(scene);
}

GoalLabels label_goal_candidates(const Scene& scene, double epsilon) {
  if (!scene.focus().has_future())
    throw std::runtime_error("label_goal_candidates: focus agent has no future");
  GoalLabels out;
  out.epsilon = epsilon;
  const Vec2 endpoint = scene.focus().future_positions.back();
  out.candidates = scene.graph.node_positions;
  out.labels.reserve(out.candidates.size());
  for (const Vec2& c : out.candidates) {
    const int label = distance(c, endpoint) < epsilon ? 1 : 0;
    out.labels.push_back(label);
    out.has_positive = out.has_positive || label == 1;
  }
  return out;
}

}  // namespace ssllanes
