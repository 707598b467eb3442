#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "ssllanes/scene_io.hpp"
#include "ssllanes/synthgen.hpp"

using namespace ssllanes;

TEST_CASE("straight template: single lane of 10 nodes is a 9-edge chain") {
  LaneTemplateOptions opts;
  opts.n_lanes = 1;
  opts.lane_len = 9.0 * 4.0;
  LaneGraph g = gen_lane_graph(1, LaneTemplate::straight, 4.0, opts);
  CHECK(g.num_nodes() == 10);
  CHECK(g.edges(Relation::suc).size() == 9);
  int flags = 0;
  for (bool b : g.intersection_flags) flags += b ? 1 : 0;
  CHECK(flags == 0);
  CHECK_NOTHROW(validate_lane_graph(g));
}

TEST_CASE("cross intersection: flagged nodes reachable from all four arms") {
  LaneGraph g = gen_lane_graph(3, LaneTemplate::cross_intersection, 4.0);
  int flagged = 0;
  for (bool b : g.intersection_flags) flagged += b ? 1 : 0;
  CHECK(flagged > 0);

  // walk suc edges from each arm's first approach node; must hit a flagged node
  std::vector<std::vector<int>> suc_out(static_cast<std::size_t>(g.num_nodes()));
  for (const auto& [a, b] : g.edges(Relation::suc))
    suc_out[static_cast<std::size_t>(a)].push_back(b);
  // the four approach lanes are lanes 0..3 by construction
  for (int lane = 0; lane < 4; ++lane) {
    std::vector<int> stack = {g.lane_membership.at(lane).front()};
    std::vector<bool> seen(static_cast<std::size_t>(g.num_nodes()), false);
    bool hit = false;
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      if (seen[static_cast<std::size_t>(n)]) continue;
      seen[static_cast<std::size_t>(n)] = true;
      if (g.intersection_flags[static_cast<std::size_t>(n)]) {
        hit = true;
        break;
      }
      for (int nx : suc_out[static_cast<std::size_t>(n)]) stack.push_back(nx);
    }
    CHECK(hit);
  }
}

TEST_CASE("random templates pass lane graph invariants") {
  std::mt19937_64 rng(99);
  const LaneTemplate all[] = {LaneTemplate::straight, LaneTemplate::t_intersection,
                              LaneTemplate::cross_intersection, LaneTemplate::curve};
  for (int i = 0; i < 100; ++i) {
    const LaneTemplate tmpl = all[i % 4];
    const double spacing = std::uniform_real_distribution<double>(2.5, 6.0)(rng);
    LaneGraph g = gen_lane_graph(rng(), tmpl, spacing);
    CHECK_NOTHROW(validate_lane_graph(g));
  }
}

TEST_CASE("maintain-speed with zero noise gives a collinear constant-step future") {
  WorldConfig cfg;
  cfg.maneuver_mix = {{Maneuver::maintain_speed, 1.0}};
  cfg.region_mix = {{"A", 1.0}};
  cfg.noise_sigma = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Scene s = gen_scene(seed, cfg);
    const auto& fut = s.focus().future_positions;
    REQUIRE(fut.size() == static_cast<std::size_t>(cfg.horizon));
    const Vec2 step = fut[1] - fut[0];
    for (std::size_t i = 2; i < fut.size(); ++i) {
      const Vec2 d = fut[i] - fut[i - 1];
      CHECK(std::abs(d.x - step.x) < 1e-6);
      CHECK(std::abs(d.y - step.y) < 1e-6);
    }
  }
}

TEST_CASE("turn-left script ends heading within 20 degrees of +y") {
  WorldConfig cfg;
  cfg.maneuver_mix = {{Maneuver::turn_left, 1.0}};
  cfg.region_mix = {{"A", 1.0}};
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Scene s = gen_scene(seed, cfg);
    const auto& fut = s.focus().future_positions;
    const Vec2 final_heading = fut.back() - fut[fut.size() - 2];
    const double angle_from_y = std::abs(angle_of(final_heading) - M_PI / 2.0);
    CHECK(angle_from_y < 20.0 * M_PI / 180.0);
  }
}

TEST_CASE("fixed seed regenerates a bit-identical scene") {
  WorldConfig cfg;
  cfg.n_scenes = 4;
  Scene a = gen_scene(77, cfg);
  Scene b = gen_scene(77, cfg);
  CHECK(scene_to_json_line(a) == scene_to_json_line(b));
}

TEST_CASE("generated scenes are normalized, consistent and re-normalization stable") {
  WorldConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Scene s = gen_scene(seed, cfg);
    CHECK_NOTHROW(validate_scene(s));
    const Vec2 p0 = s.focus().current_position();
    CHECK(std::abs(p0.x) < 1e-9);
    CHECK(std::abs(p0.y) < 1e-9);
    Scene again = normalize_scene(s);
    CHECK(std::abs(again.frame.rotation - s.frame.rotation) < 1e-9);
  }
}

TEST_CASE("dataset split sizes and region tagging") {
  WorldConfig cfg;
  cfg.n_scenes = 50;
  cfg.seed = 5;
  cfg.val_fraction = 0.2;
  Dataset d = gen_dataset(cfg);
  CHECK(d.train.size() == 40);
  CHECK(d.val.size() == 10);

  WorldConfig only_a = cfg;
  only_a.n_scenes = 20;
  only_a.region_mix = {{"A", 1.0}};
  Dataset da = gen_dataset(only_a);
  for (const auto& s : da.train) CHECK(s.tags.at("region") == "A");
  for (const auto& s : da.val) CHECK(s.tags.at("region") == "A");
}

TEST_CASE("dataset generation is deterministic in (seed, config)") {
  WorldConfig cfg;
  cfg.n_scenes = 12;
  cfg.seed = 21;
  Dataset a = gen_dataset(cfg);
  Dataset b = gen_dataset(cfg);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(scene_to_json_line(a.train[i]) == scene_to_json_line(b.train[i]));
}

TEST_CASE("maneuver histogram matches the requested mix (chi-square)") {
  WorldConfig cfg;
  cfg.n_scenes = 10000;
  cfg.seed = 1;
  cfg.agents_per_scene = {1, 1};  // keep this test fast
  std::map<std::string, int> counts;
  std::mt19937_64 seed_rng(cfg.seed);
  for (int i = 0; i < cfg.n_scenes; ++i) {
    // sample tags without building full scenes: gen_scene is the only sampler,
    // so run it on a light config
    Scene s = gen_scene(seed_rng(), cfg);
    counts[s.tags.at("maneuver")]++;
  }
  double chi2 = 0.0;
  const double expected = cfg.n_scenes / 6.0;
  for (int m = 0; m < kNumManeuvers; ++m) {
    const double c = counts[to_string(static_cast<Maneuver>(m))];
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 5 dof, p > 0.01 -> chi2 below 15.086
  CHECK(chi2 < 15.086);
}
