#include <benchmark/benchmark.h>

#include <numeric>

#include "causalflow/flow.hpp"
#include "causalflow/scm.hpp"
#include "causalflow/train.hpp"

using namespace causalflow;

namespace {

void BM_FlowLogPdf(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  FlowModel m(Dag::chain(d), FlowConfig{}, 2);
  auto data = sample(random_linear_scm(Dag::chain(d), 3), 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(m.log_pdf(data.row(0)));
}
BENCHMARK(BM_FlowLogPdf)->Arg(3)->Arg(10);

void BM_FlowInverse(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  FlowModel m(Dag::chain(d), FlowConfig{}, 2);
  auto data = sample(random_linear_scm(Dag::chain(d), 3), 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(m.inverse(data.row(0)));
}
BENCHMARK(BM_FlowInverse)->Arg(3)->Arg(10);

void BM_NllGradientBatch(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  FlowModel m(Dag::chain(d), FlowConfig{}, 2);
  auto data = sample(random_linear_scm(Dag::chain(d), 3), 256, 4);
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> grad(m.params().size());
  for (auto _ : state) benchmark::DoNotOptimize(nll_gradient(m, data, rows, grad, true));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_NllGradientBatch)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
