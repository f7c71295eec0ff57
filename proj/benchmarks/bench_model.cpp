#include <benchmark/benchmark.h>

#include "pavepci/backbones.hpp"
#include "pavepci/random.hpp"

using namespace pavepci;

namespace {

Tensor<float> input(int batch, int size) {
  Tensor<float> t(Shape{batch, 3, size, size});
  Rng rng(11);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

// Args: family, image side. Batch of 1 in eval mode.
void BM_Predict(benchmark::State& state) {
  const auto family = static_cast<Family>(state.range(0));
  Model model = build_model(ArchitectureSpec::for_family(family), 1);
  const Tensor<float> x = input(1, static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
  state.SetLabel(to_string(family));
}
BENCHMARK(BM_Predict)
    ->Args({static_cast<int>(Family::resnet50), 64})
    ->Args({static_cast<int>(Family::resnet50_cbam), 64})
    ->Args({static_cast<int>(Family::densenet161), 64})
    ->Args({static_cast<int>(Family::resnet50_cbam), 224})
    ->Unit(benchmark::kMillisecond);

void BM_TrainStepForwardBackward(benchmark::State& state) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 1);
  model.set_training(true);
  const Tensor<float> x = input(4, 64);
  Tensor<float> g(Shape{4, 1, 1, 1});
  g.fill(1.0f);
  for (auto _ : state) {
    model.forward(x);
    benchmark::DoNotOptimize(model.backward(g));
  }
}
BENCHMARK(BM_TrainStepForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
