#include "ssllanes/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ssllanes {

const char* to_string(Relation r) {
  switch (r) {
    case Relation::pre: return "pre";
    case Relation::suc: return "suc";
    case Relation::left: return "left";
    case Relation::right: return "right";
  }
  return "?";
}

AgentTrack AgentTrack::from_positions(std::vector<Vec2> past, std::vector<Vec2> future,
                                      std::vector<bool> observed) {
  if (past.size() < 2) throw std::invalid_argument("agent track needs >= 2 past positions");
  AgentTrack t;
  t.past_positions = std::move(past);
  t.future_positions = std::move(future);
  const std::size_t steps = t.past_positions.size() - 1;
  if (observed.empty()) observed.assign(steps, true);
  if (observed.size() != steps)
    throw std::invalid_argument("observed mask length must equal displacement count");
  t.observed_mask = std::move(observed);
  t.past_displacements.resize(steps);
  for (std::size_t l = 0; l < steps; ++l)
    t.past_displacements[l] = t.past_positions[l + 1] - t.past_positions[l];
  return t;
}

void validate_lane_graph(const LaneGraph& graph) {
  const int m = graph.num_nodes();
  if (static_cast<int>(graph.node_features.size()) != m * kNodeFeatureDim)
    throw std::runtime_error("lane graph: feature row count != node count");
  if (static_cast<int>(graph.intersection_flags.size()) != m)
    throw std::runtime_error("lane graph: intersection flag count != node count");

  std::vector<int> lane_of(static_cast<std::size_t>(m), -1);
  for (const auto& [lane_id, nodes] : graph.lane_membership) {
    for (int n : nodes) {
      if (n < 0 || n >= m) throw std::runtime_error("lane graph: lane node index out of range");
      if (lane_of[static_cast<std::size_t>(n)] != -1)
        throw std::runtime_error("lane graph: node " + std::to_string(n) +
                                 " appears in more than one lane");
      lane_of[static_cast<std::size_t>(n)] = lane_id;
    }
  }
  for (int n = 0; n < m; ++n)
    if (lane_of[static_cast<std::size_t>(n)] == -1)
      throw std::runtime_error("lane graph: node " + std::to_string(n) + " belongs to no lane");

  for (int r = 0; r < kNumRelations; ++r) {
    std::set<std::pair<int, int>> seen;
    for (const auto& [g, h] : graph.adjacency[static_cast<std::size_t>(r)]) {
      if (g < 0 || g >= m || h < 0 || h >= m)
        throw std::runtime_error("lane graph: adjacency index out of range");
      if (g == h) throw std::runtime_error("lane graph: self loop in relation " +
                                           std::string(to_string(static_cast<Relation>(r))));
      if (!seen.emplace(g, h).second)
        throw std::runtime_error("lane graph: duplicate edge in relation " +
                                 std::string(to_string(static_cast<Relation>(r))));
    }
  }

  auto sorted = [](EdgeList e) {
    std::sort(e.begin(), e.end());
    return e;
  };
  EdgeList suc_t;
  for (const auto& [g, h] : graph.edges(Relation::suc)) suc_t.emplace_back(h, g);
  if (sorted(suc_t) != sorted(graph.edges(Relation::pre)))
    throw std::runtime_error("lane graph: pre is not the transpose of suc");

  for (int n = 0; n < m; ++n) {
    const bool flag = graph.feature(n, 2) != 0.0;
    if (flag != graph.intersection_flags[static_cast<std::size_t>(n)])
      throw std::runtime_error("lane graph: intersection flag/feature mismatch at node " +
                               std::to_string(n));
  }
}

void validate_scene(const Scene& scene) {
  validate_lane_graph(scene.graph);
  if (scene.focus_agent < 0 ||
      scene.focus_agent >= static_cast<int>(scene.agents.size()))
    throw std::runtime_error("scene: focus agent index out of range");
  for (const auto& a : scene.agents) {
    if (a.past_positions.size() != a.past_displacements.size() + 1)
      throw std::runtime_error("scene: track position/displacement size mismatch");
    if (a.observed_mask.size() != a.past_displacements.size())
      throw std::runtime_error("scene: observed mask size mismatch");
    for (std::size_t l = 0; l < a.past_displacements.size(); ++l) {
      if (!a.observed_mask[l]) continue;
      const Vec2 d = a.past_positions[l + 1] - a.past_positions[l];
      if (std::abs(d.x - a.past_displacements[l].x) > 1e-9 ||
          std::abs(d.y - a.past_displacements[l].y) > 1e-9)
        throw std::runtime_error("scene: displacement inconsistent with positions");
    }
  }
}

namespace {

Scene transform_scene(const Scene& scene, const Vec2& origin, double rotation) {
  // local' = R(-rotation) * (local - origin)
  Scene out = scene;
  auto map_pt = [&](const Vec2& p) { return rotated(p - origin, -rotation); };
  auto map_dir = [&](const Vec2& d) { return rotated(d, -rotation); };

  for (auto& p : out.graph.node_positions) p = map_pt(p);
  for (int n = 0; n < out.graph.num_nodes(); ++n) {
    const Vec2 dir = map_dir({out.graph.feature(n, 0), out.graph.feature(n, 1)});
    out.graph.feature(n, 0) = dir.x;
    out.graph.feature(n, 1) = dir.y;
  }
  for (auto& a : out.agents) {
    for (auto& p : a.past_positions) p = map_pt(p);
    for (auto& p : a.future_positions) p = map_pt(p);
    for (std::size_t l = 0; l + 1 < a.past_positions.size(); ++l)
      a.past_displacements[l] = a.past_positions[l + 1] - a.past_positions[l];
  }
  // compose: new local -> old local -> world
  out.frame.origin = scene.frame.to_world(origin);
  out.frame.rotation = scene.frame.rotation + rotation;
  return out;
}

}  // namespace

Scene normalize_scene(const Scene& scene) {
  const AgentTrack& focus = scene.focus();
  int observed = 0;
  for (bool b : focus.observed_mask) observed += b ? 1 : 0;
  if (observed < 1)
    throw std::runtime_error("normalize_scene: focus agent has fewer than 2 observed positions");

  const Vec2 origin = focus.current_position();
  double rotation = 0.0;
  bool degenerate = true;
  for (int l = focus.history_len() - 1; l >= 0; --l) {
    const Vec2 d = focus.past_displacements[static_cast<std::size_t>(l)];
    if (focus.observed_mask[static_cast<std::size_t>(l)] && norm(d) > 1e-9) {
      rotation = angle_of(d);
      degenerate = false;
      break;
    }
  }
  Scene out = transform_scene(scene, origin, rotation);
  if (degenerate) out.tags["degenerate_heading"] = "1";
  return out;
}

Scene rotate_scene(const Scene& scene, double gamma) {
  // rotating by gamma = transforming with rotation -gamma about the origin
  return transform_scene(scene, Vec2{0.0, 0.0}, -gamma);
}

Scene crop_radius(const Scene& scene, double radius) {
  Scene out;
  out.frame = scene.frame;
  out.tags = scene.tags;

  const int m = scene.graph.num_nodes();
  std::vector<int> remap(static_cast<std::size_t>(m), -1);
  int kept = 0;
  for (int n = 0; n < m; ++n) {
    if (norm(scene.graph.node_positions[static_cast<std::size_t>(n)]) <= radius)
      remap[static_cast<std::size_t>(n)] = kept++;
  }
  if (kept == 0) throw std::runtime_error("crop_radius: no lane nodes within radius");

  out.graph.node_positions.reserve(static_cast<std::size_t>(kept));
  out.graph.node_features.reserve(static_cast<std::size_t>(kept) * kNodeFeatureDim);
  out.graph.intersection_flags.reserve(static_cast<std::size_t>(kept));
  for (int n = 0; n < m; ++n) {
    if (remap[static_cast<std::size_t>(n)] < 0) continue;
    out.graph.node_positions.push_back(scene.graph.node_positions[static_cast<std::size_t>(n)]);
    for (int f = 0; f < kNodeFeatureDim; ++f)
      out.graph.node_features.push_back(scene.graph.feature(n, f));
    out.graph.intersection_flags.push_back(scene.graph.intersection_flags[static_cast<std::size_t>(n)]);
  }
  for (int r = 0; r < kNumRelations; ++r) {
    for (const auto& [g, h] : scene.graph.adjacency[static_cast<std::size_t>(r)]) {
      const int gg = remap[static_cast<std::size_t>(g)], hh = remap[static_cast<std::size_t>(h)];
      if (gg >= 0 && hh >= 0)
        out.graph.adjacency[static_cast<std::size_t>(r)].emplace_back(gg, hh);
    }
  }
  for (const auto& [lane_id, nodes] : scene.graph.lane_membership) {
    std::vector<int> kept_nodes;
    for (int n : nodes)
      if (remap[static_cast<std::size_t>(n)] >= 0)
        kept_nodes.push_back(remap[static_cast<std::size_t>(n)]);
    if (!kept_nodes.empty()) out.graph.lane_membership[lane_id] = std::move(kept_nodes);
  }

  for (int i = 0; i < static_cast<int>(scene.agents.size()); ++i) {
    const auto& a = scene.agents[static_cast<std::size_t>(i)];
    const bool keep = i == scene.focus_agent || norm(a.current_position()) <= radius;
    if (!keep) continue;
    if (i == scene.focus_agent) out.focus_agent = static_cast<int>(out.agents.size());
    out.agents.push_back(a);
  }
  return out;
}

EdgeList adjacency_power(const EdgeList& edges, int num_nodes, int k) {
  if (k < 1) throw std::invalid_argument("adjacency_power: k must be >= 1");
  // boolean matrix power by repeated squaring over row bitsets
  using Row = std::vector<std::uint64_t>;
  const int words = (num_nodes + 63) / 64;
  auto zero = [&] { return std::vector<Row>(static_cast<std::size_t>(num_nodes),
                                            Row(static_cast<std::size_t>(words), 0)); };
  auto mult = [&](const std::vector<Row>& a, const std::vector<Row>& b) {
    std::vector<Row> c = zero();
    for (int i = 0; i < num_nodes; ++i) {
      for (int j = 0; j < num_nodes; ++j) {
        if (a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j / 64)] >>
                (j % 64) & 1u) {
          for (int w = 0; w < words; ++w)
            c[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)] |=
                b[static_cast<std::size_t>(j)][static_cast<std::size_t>(w)];
        }
      }
    }
    return c;
  };

  std::vector<Row> base = zero();
  for (const auto& [g, h] : edges)
    base[static_cast<std::size_t>(g)][static_cast<std::size_t>(h / 64)] |=
        std::uint64_t{1} << (h % 64);

  std::vector<Row> result;
  bool have = false;
  std::vector<Row> sq = base;
  int kk = k;
  while (kk > 0) {
    if (kk & 1) {
      result = have ? mult(result, sq) : sq;
      have = true;
    }
    kk >>= 1;
    if (kk > 0) sq = mult(sq, sq);
  }

  EdgeList out;
  for (int i = 0; i < num_nodes; ++i)
    for (int j = 0; j < num_nodes; ++j)
      if (result[static_cast<std::size_t>(i)][static_cast<std::size_t>(j / 64)] >>
              (j % 64) & 1u)
        out.emplace_back(i, j);
  return out;
}

DilatedAdjacency adjacency_powers(const LaneGraph& graph, const std::vector<int>& dilations) {
  for (std::size_t i = 1; i < dilations.size(); ++i)
    if (dilations[i] <= dilations[i - 1])
      throw std::invalid_argument("adjacency_powers: dilations must be sorted ascending");
  DilatedAdjacency out;
  out.num_nodes = graph.num_nodes();
  out.dilations = dilations;
  for (int k : dilations) {
    out.pre[k] = adjacency_power(graph.edges(Relation::pre), graph.num_nodes(), k);
    out.suc[k] = adjacency_power(graph.edges(Relation::suc), graph.num_nodes(), k);
  }
  out.left = graph.edges(Relation::left);
  out.right = graph.edges(Relation::right);
  return out;
}

}  // namespace ssllanes
