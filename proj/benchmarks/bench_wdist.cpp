#include <benchmark/benchmark.h>

#include "causalflow/rng.hpp"
#include "causalflow/wdist.hpp"

using namespace causalflow;

namespace {

DiscreteMeasure chain_measure(int d, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> grid(d);
  for (auto& g : grid)
    for (int i = 0; i < k; ++i) g.push_back((i + 0.5) / k);
  return DiscreteMeasure::from_kernels(Dag::chain(d), grid, [&](int, std::span<const double>) {
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& x : w) total += (x = 0.1 + rng.uniform());
    for (auto& x : w) x /= total;
    return w;
  });
}

void BM_WgNested(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  auto mu = chain_measure(d, k, 1);
  auto nu = chain_measure(d, k, 2);
  for (auto _ : state) benchmark::DoNotOptimize(wg_nested_discrete(mu, nu));
}
BENCHMARK(BM_WgNested)->Args({2, 3})->Args({3, 3})->Args({3, 4})->Unit(benchmark::kMillisecond);

void BM_W1Discrete(benchmark::State& state) {
  auto mu = chain_measure(3, 4, 1);
  auto nu = chain_measure(3, 4, 2);
  for (auto _ : state) benchmark::DoNotOptimize(w1_discrete(mu, nu));
}
BENCHMARK(BM_W1Discrete)->Unit(benchmark::kMillisecond);

}  // namespace
