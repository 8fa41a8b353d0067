#include <benchmark/benchmark.h>

#include "aden/nnet.hpp"

using namespace aden;

static void BM_MlpForwardBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const auto rows = state.range(1);
  const Mlp net("n", MlpSpec::make(width, width, 3, 1));
  ParamStore p;
  Rng rng(1);
  net.init(p, rng);
  const Tensor2 x = Tensor2::Random(rows, static_cast<Eigen::Index>(width));
  const Tensor2 up = Tensor2::Ones(rows, 1);
  for (auto _ : state) {
    MlpTape tape;
    benchmark::DoNotOptimize(net.forward(p, x, &tape).data());
    Gradients g = p.zero_gradients();
    net.backward(p, tape, up, g);
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_MlpForwardBackward)->Args({64, 128})->Args({64, 512})->Args({256, 500});

static void BM_AdamStep(benchmark::State& state) {
  const Mlp net("n", MlpSpec::make(256, 256, 3, 1));
  ParamStore p;
  Rng rng(2);
  net.init(p, rng);
  Gradients g = p.zero_gradients();
  for (auto& [_, t] : g) t.setConstant(1e-3);
  for (auto _ : state) adam_step(p, g, AdamConfig{});
}
BENCHMARK(BM_AdamStep);

BENCHMARK_MAIN();
