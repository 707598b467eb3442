#include <benchmark/benchmark.h>

#include "ssllanes/losses.hpp"
#include "ssllanes/model.hpp"
#include "ssllanes/synthgen.hpp"

using namespace ssllanes;

namespace {

Scene make_scene(std::uint64_t seed) {
  WorldConfig cfg;
  cfg.agents_per_scene = {3, 3};
  return gen_scene(seed, cfg);
}

}  // namespace

static void BM_SceneForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.hidden_dim = static_cast<int>(state.range(0));
  ForecastModel model(cfg, 1);
  Scene scene = make_scene(7);
  DilatedAdjacency adj = adjacency_powers(scene.graph, cfg.dilations);
  for (auto _ : state) {
    ad::Graph g;
    GraphParams params(g, model.store());
    auto fwd = model.forward(g, params, scene, adj);
    benchmark::DoNotOptimize(fwd.dec.scores.value().data());
  }
}
BENCHMARK(BM_SceneForward)->Arg(16)->Arg(32)->Arg(64);

static void BM_SceneForwardBackward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.hidden_dim = static_cast<int>(state.range(0));
  ForecastModel model(cfg, 1);
  Scene scene = make_scene(7);
  DilatedAdjacency adj = adjacency_powers(scene.graph, cfg.dilations);
  for (auto _ : state) {
    ad::Graph g;
    GraphParams params(g, model.store());
    auto fwd = model.forward(g, params, scene, adj);
    auto sup = supervised_losses(g, fwd.dec, scene.focus().future_positions);
    auto total = total_loss(g, sup, ad::Var{});
    g.backward(total.value);
    params.flush();
    model.store().zero_grad();
    benchmark::DoNotOptimize(total.report.total);
  }
}
BENCHMARK(BM_SceneForwardBackward)->Arg(16)->Arg(32);

static void BM_AdjacencyPowers(benchmark::State& state) {
  Scene scene = make_scene(11);
  const std::vector<int> dilations = {1, 2, 4, 8, 16, 32};
  for (auto _ : state) {
    DilatedAdjacency adj = adjacency_powers(scene.graph, dilations);
    benchmark::DoNotOptimize(adj.suc.at(32).size());
  }
}
BENCHMARK(BM_AdjacencyPowers);

BENCHMARK_MAIN();
