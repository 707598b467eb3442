#include <benchmark/benchmark.h>

#include <random>

#include "ssllanes/autodiff.hpp"

using namespace ssllanes;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

}  // namespace

static void BM_MatmulForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const auto av = randn(rng, static_cast<std::size_t>(n) * n);
  const auto bv = randn(rng, static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    ad::Graph g;
    ad::Var a = g.leaf({n, n}, av, true);
    ad::Var b = g.leaf({n, n}, bv, true);
    ad::Var loss = ad::mean_all(ad::matmul(a, b));
    g.backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void BM_Conv1dForwardBackward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const auto xv = randn(rng, static_cast<std::size_t>(4) * channels * 20);
  const auto wv = randn(rng, static_cast<std::size_t>(channels) * channels * 3);
  const auto bv = randn(rng, static_cast<std::size_t>(channels));
  for (auto _ : state) {
    ad::Graph g;
    ad::Var x = g.leaf({4, channels, 20}, xv, true);
    ad::Var w = g.leaf({channels, channels, 3}, wv, true);
    ad::Var b = g.leaf({channels}, bv, true);
    ad::Var loss = ad::mean_all(ad::conv1d(x, w, b, 1, 1));
    g.backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv1dForwardBackward)->Arg(16)->Arg(32)->Arg(64);

static void BM_LayerNormForwardBackward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  const auto xv = randn(rng, static_cast<std::size_t>(rows) * 32);
  const auto gv = randn(rng, 32);
  const auto bv = randn(rng, 32);
  for (auto _ : state) {
    ad::Graph g;
    ad::Var x = g.leaf({rows, 32}, xv, true);
    ad::Var gain = g.leaf({32}, gv, true);
    ad::Var bias = g.leaf({32}, bv, true);
    ad::Var loss = ad::mean_all(ad::layer_norm(x, gain, bias));
    g.backward(loss);
    benchmark::DoNotOptimize(x.grad().data());
  }
}
BENCHMARK(BM_LayerNormForwardBackward)->Arg(64)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
