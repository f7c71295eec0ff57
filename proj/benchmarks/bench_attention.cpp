#include <benchmark/benchmark.h>

#include "pavepci/attention.hpp"
#include "pavepci/metrics.hpp"
#include "pavepci/random.hpp"

using namespace pavepci;

namespace {

template <typename T>
void fill(Tensor<T>& t, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
}

// Args: channels, spatial side. Batch of 2.
void BM_CbamApply(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  Tensor<float> f(Shape{2, c, s, s});
  fill(f, 1);
  ChannelAttentionParams<float> cp(c, 16);
  fill(cp.fc1, 2);
  fill(cp.fc2, 3);
  SpatialAttentionParams<float> sp(7);
  fill(sp.kernel, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cbam_apply(f, cp, sp));
  state.SetItemsProcessed(state.iterations() * f.size());
}
BENCHMARK(BM_CbamApply)->Args({256, 56})->Args({512, 28})->Args({1024, 14})->Args({2048, 7});

void BM_CbamBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  Tensor<float> f(Shape{2, c, s, s});
  fill(f, 1);
  ChannelAttentionParams<float> cp(c, 16);
  fill(cp.fc1, 2);
  fill(cp.fc2, 3);
  SpatialAttentionParams<float> sp(7);
  fill(sp.kernel, 4);
  CbamTape<float> tape;
  const Tensor<float> out = cbam_apply(f, cp, sp, &tape);
  Tensor<float> g(out.shape());
  fill(g, 5);
  for (auto _ : state) benchmark::DoNotOptimize(cbam_backward(g, view_of(cp), view_of(sp), tape));
}
BENCHMARK(BM_CbamBackward)->Args({256, 56})->Args({2048, 7});

void BM_EvaluateMetrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), p(n);
  Rng rng(9);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform(1.0, 100.0);
    p[i] = rng.uniform(0.0, 100.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_metrics(a, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EvaluateMetrics)->Arg(771)->Arg(100000);

}  // namespace
