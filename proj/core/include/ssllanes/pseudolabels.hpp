// Self-supervision targets generated from unannotated scenes: per-lane feature
// masking, BFS hop distance to intersection nodes, balanced-cluster maneuver
// ids from agent endpoints, and goal success/failure labels over lane nodes.
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ssllanes/geometry.hpp"
#include "ssllanes/maneuver.hpp"
#include "ssllanes/scenegraph.hpp"

namespace ssllanes {

struct MaskSpec {
  std::map<int, std::vector<int>> masked_per_lane;  // lane id -> sorted node indices
  std::vector<int> masked_nodes;                    // flattened, unique
  std::vector<double> target_features;              // |masked| x kNodeFeatureDim
  double ratio = 0.0;
};

// Zeroes round(m_a * lane_len) feature rows per lane (at least one per lane
// when m_a > 0) and records the original rows as reconstruction targets.
std::pair<std::vector<double>, MaskSpec> mask_lanes(const LaneGraph& graph, double m_a,
                                                    std::uint64_t seed);

struct DistanceLabels {
  std::vector<double> d;        // hop distance, 0 on intersection nodes
  std::vector<bool> reachable;  // unreachable nodes are excluded from the loss
};

// Multi-source BFS from the intersection nodes over the undirected union of
// all four relations. Throws if the graph has no intersection node.
DistanceLabels bfs_distance_to_intersection(const LaneGraph& graph);

struct ClusterResult {
  std::vector<int> assignments;   // n, cluster ids in [0, k)
  std::vector<Vec2> centroids;    // k
  double objective = 0.0;         // sum of squared distances
  std::vector<double> objective_trace;  // objective after each iteration
  int iterations = 0;
};

// Lloyd iterations with a minimum-size constraint: nearest-centroid assignment
// followed by a repair pass that moves the cheapest points out of oversized
// clusters until every cluster holds >= min_size members. The objective is
// non-increasing across iterations; terminates on an assignment fixpoint or
// after 100 iterations. Throws if n < k * min_size or n < k.
ClusterResult constrained_kmeans(const std::vector<Vec2>& points, int k, int min_size,
                                 std::uint64_t seed);

struct ManeuverLabels {
  std::vector<int> labels;        // per scene (focus agent); -1 when skipped
  std::map<int, Vec2> centroids;  // maneuver id -> endpoint-space centroid
};

// Labels each scene's focus agent with a maneuver id. Scenes must be
// normalized; agents without a future are skipped (-1).
ManeuverLabels label_maneuvers(const std::vector<Scene>& scenes, std::uint64_t seed);

// Nearest-centroid assignment for held-out scenes, using the rules plus the
// centroids fitted by label_maneuvers. Returns -1 when the focus agent has no
// future.
int assign_maneuver(const ManeuverLabels& fitted, const Scene& scene);

struct GoalLabels {
  std::vector<Vec2> candidates;  // one per lane node, in node order
  std::vector<int> labels;       // 1 iff within epsilon of the GT endpoint
  double epsilon = 2.0;
  bool has_positive = false;     // scenes without a positive get flagged
};

GoalLabels label_goal_candidates(const Scene& scene, double epsilon = 2.0);

}  // namespace ssllanes
