// Hand-built small scenes for unit tests.
#pragma once

#include <random>

#include "ssllanes/scenegraph.hpp"

namespace testsupport {

// Single-lane chain along +x with `n` nodes, node `flagged` (if >= 0) marked
// as intersection.
inline ssllanes::LaneGraph chain_graph(int n, double spacing = 4.0, int flagged = -1) {
  using namespace ssllanes;
  LaneGraph g;
  for (int i = 0; i < n; ++i) {
    g.node_positions.push_back({i * spacing, 0.0});
    g.node_features.insert(g.node_features.end(), {1.0, 0.0, i == flagged ? 1.0 : 0.0, 0.0});
    g.intersection_flags.push_back(i == flagged);
    g.lane_membership[0].push_back(i);
    if (i > 0) {
      g.edges(Relation::suc).emplace_back(i - 1, i);
      g.edges(Relation::pre).emplace_back(i, i - 1);
    }
  }
  return g;
}

// Random straight-ish scene with one focus agent; geometry is arbitrary but
// internally consistent.
inline ssllanes::Scene random_scene(std::mt19937_64& rng, int n_nodes = 12,
                                    int history = 6, int horizon = 8) {
  using namespace ssllanes;
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  Scene s;
  s.graph = chain_graph(n_nodes);
  for (auto& p : s.graph.node_positions) p = {u(rng), u(rng)};

  std::vector<Vec2> past, future;
  Vec2 pos{u(rng), u(rng)};
  Vec2 step{std::uniform_real_distribution<double>(0.3, 1.5)(rng),
            std::uniform_real_distribution<double>(-0.4, 0.4)(rng)};
  for (int i = 0; i <= history; ++i) {
    past.push_back(pos);
    pos += step;
  }
  for (int i = 0; i < horizon; ++i) {
    future.push_back(pos);
    pos += step;
  }
  s.agents.push_back(AgentTrack::from_positions(past, future, {}));
  s.focus_agent = 0;
  return s;
}

}  // namespace testsupport
