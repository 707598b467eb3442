// Scene data model: lane graph, agent tracks, agent-centric normalization,
// rotation augmentation, radius cropping and dilated adjacency precomputation.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssllanes/geometry.hpp"

namespace ssllanes {

// Directed edge (g, h): h is a {pre,suc,left,right}-type neighbor of g.
using EdgeList = std::vector<std::pair<int, int>>;

enum class Relation : int { pre = 0, suc = 1, left = 2, right = 3 };
constexpr int kNumRelations = 4;
const char* to_string(Relation r);

// Node features: [dir_x, dir_y, intersection_flag, turn_flag].
constexpr int kNodeFeatureDim = 4;

struct LaneGraph {
  std::vector<Vec2> node_positions;                  // M
  std::vector<double> node_features;                 // M x kNodeFeatureDim, row major
  std::array<EdgeList, kNumRelations> adjacency;     // indexed by Relation
  std::map<int, std::vector<int>> lane_membership;   // lane id -> ordered node indices
  std::vector<bool> intersection_flags;              // M

  int num_nodes() const { return static_cast<int>(node_positions.size()); }
  const EdgeList& edges(Relation r) const { return adjacency[static_cast<int>(r)]; }
  EdgeList& edges(Relation r) { return adjacency[static_cast<int>(r)]; }

  double feature(int node, int f) const {
    return node_features[static_cast<std::size_t>(node) * kNodeFeatureDim + f];
  }
  double& feature(int node, int f) {
    return node_features[static_cast<std::size_t>(node) * kNodeFeatureDim + f];
  }
};

struct AgentTrack {
  std::vector<Vec2> past_displacements;  // L, derived from past_positions
  std::vector<Vec2> past_positions;      // L + 1, covering t = -L .. 0
  std::vector<Vec2> future_positions;    // T, empty for unlabeled scenes
  std::vector<bool> observed_mask;       // L, aligned with past_displacements

  // Displacements are always differences of consecutive positions, so the
  // track invariant holds exactly by construction.
  static AgentTrack from_positions(std::vector<Vec2> past, std::vector<Vec2> future,
                                   std::vector<bool> observed);

  Vec2 current_position() const { return past_positions.back(); }
  int history_len() const { return static_cast<int>(past_displacements.size()); }
  bool has_future() const { return !future_positions.empty(); }
};

// Rigid transform from scene-local coordinates to the coordinates the scene
// had before normalization: world = R(rotation) * local + origin.
struct NormalizationFrame {
  Vec2 origin;
  double rotation = 0.0;

  Vec2 to_world(const Vec2& local) const { return rotated(local, rotation) + origin; }
  Vec2 to_local(const Vec2& world) const { return rotated(world - origin, -rotation); }
};

struct Scene {
  LaneGraph graph;
  std::vector<AgentTrack> agents;
  int focus_agent = 0;
  NormalizationFrame frame;
  std::map<std::string, std::string> tags;

  const AgentTrack& focus() const { return agents[static_cast<std::size_t>(focus_agent)]; }
};

// Throws std::runtime_error describing the first violated invariant.
void validate_lane_graph(const LaneGraph& graph);
void validate_scene(const Scene& scene);

// Recenters on the focus agent at t=0 and aligns its heading with +x. The
// applied transform is composed into scene.frame. A focus agent with no
// nonzero past displacement gets rotation 0 and tag degenerate_heading=1.
Scene normalize_scene(const Scene& scene);

// Rotates every position, displacement and direction feature about the origin.
Scene rotate_scene(const Scene& scene, double gamma);

// Drops agents and lane nodes farther than `radius` from the origin and
// reindexes adjacency and lane membership. The focus agent is always kept.
// Throws if no lane nodes survive.
Scene crop_radius(const Scene& scene, double radius);

// Exact-k-hop reachability of one relation: (i, j) is an edge of power k iff
// a directed path of exactly k edges joins i to j.
EdgeList adjacency_power(const EdgeList& edges, int num_nodes, int k);

// Powers of the pre and suc relations for every requested dilation, plus the
// 1-hop left/right relations, precomputed once per scene for the map encoder.
struct DilatedAdjacency {
  int num_nodes = 0;
  std::vector<int> dilations;
  std::map<int, EdgeList> pre;
  std::map<int, EdgeList> suc;
  EdgeList left;
  EdgeList right;
};
DilatedAdjacency adjacency_powers(const LaneGraph& graph, const std::vector<int>& dilations);

}  // namespace ssllanes
