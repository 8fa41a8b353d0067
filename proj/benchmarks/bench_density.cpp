#include <benchmark/benchmark.h>

#include "aden/density.hpp"

using namespace aden;

static void BM_KdeDensity(benchmark::State& state) {
  const auto samples = so3_sample_grid(static_cast<std::size_t>(state.range(0)), 1);
  const KdeModel kde(samples, 0.13);
  Rng rng(2);
  const Rotation q = random_rotation(rng);
  for (auto _ : state) benchmark::DoNotOptimize(kde_density(kde, q));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdeDensity)->Arg(128)->Arg(500)->Arg(5000);

static void BM_MixtureNll(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto samples = so3_sample_grid(n, 3);
  std::vector<MixtureComponent> comps;
  for (const auto& r : samples) comps.push_back({r, 1.0 / static_cast<double>(n), 0.2});
  const MixtureModel mm(std::move(comps));
  Rng rng(4);
  const Rotation q = random_rotation(rng);
  for (auto _ : state) benchmark::DoNotOptimize(density_nll(mm, q).loss);
}
BENCHMARK(BM_MixtureNll)->Arg(128)->Arg(500);

static void BM_GeodesicDistance(benchmark::State& state) {
  Rng rng(5);
  const Rotation a = random_rotation(rng), b = random_rotation(rng);
  for (auto _ : state) benchmark::DoNotOptimize(geodesic_distance(a, b));
}
BENCHMARK(BM_GeodesicDistance);

BENCHMARK_MAIN();
