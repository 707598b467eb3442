#include <benchmark/benchmark.h>

#include <random>

#include "ssllanes/pseudolabels.hpp"
#include "ssllanes/synthgen.hpp"

using namespace ssllanes;

static void BM_BfsDistance(benchmark::State& state) {
  LaneGraph g = gen_lane_graph(3, LaneTemplate::cross_intersection, 2.0);
  for (auto _ : state) {
    DistanceLabels labels = bfs_distance_to_intersection(g);
    benchmark::DoNotOptimize(labels.d.data());
  }
}
BENCHMARK(BM_BfsDistance);

static void BM_MaskLanes(benchmark::State& state) {
  LaneGraph g = gen_lane_graph(5, LaneTemplate::cross_intersection, 2.0);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto [perturbed, spec] = mask_lanes(g, 0.4, seed++);
    benchmark::DoNotOptimize(perturbed.data());
  }
}
BENCHMARK(BM_MaskLanes);

static void BM_ConstrainedKMeans(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<Vec2> pts;
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ClusterResult r = constrained_kmeans(pts, 3, n / 3, seed++);
    benchmark::DoNotOptimize(r.objective);
  }
}
BENCHMARK(BM_ConstrainedKMeans)->Arg(120)->Arg(600)->Arg(3000);

static void BM_GenScene(benchmark::State& state) {
  WorldConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Scene s = gen_scene(seed++, cfg);
    benchmark::DoNotOptimize(s.graph.num_nodes());
  }
}
BENCHMARK(BM_GenScene);

BENCHMARK_MAIN();
