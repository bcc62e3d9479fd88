#include <benchmark/benchmark.h>

#include <cmath>

#include "causalflow/incr_mlp.hpp"
#include "causalflow/rng.hpp"

using namespace causalflow;

namespace {

IncrMlpParams theta(std::size_t n) {
  Rng rng(1);
  IncrMlpParams p;
  for (std::size_t i = 0; i < n; ++i) {
    p.w1.push_back(std::exp(rng.uniform(-1, 1)));
    p.b1.push_back(rng.uniform(-3, 3));
    p.w2.push_back(std::exp(rng.uniform(-1, 1)));
  }
  return p;
}

void BM_GForward(benchmark::State& state) {
  auto p = theta(static_cast<std::size_t>(state.range(0)));
  double x = 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(g_forward(x, p));
    x += 1e-9;
  }
}
BENCHMARK(BM_GForward)->Arg(4)->Arg(16)->Arg(64);

void BM_GInverse(benchmark::State& state) {
  auto p = theta(static_cast<std::size_t>(state.range(0)));
  const double y = g_forward(0.7, p);
  for (auto _ : state) benchmark::DoNotOptimize(g_inverse(y, p));
}
BENCHMARK(BM_GInverse)->Arg(4)->Arg(16)->Arg(64);

}  // namespace
