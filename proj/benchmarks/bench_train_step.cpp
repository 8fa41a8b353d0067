#include <benchmark/benchmark.h>

#include "aden/config.hpp"
#include "aden/trainer.hpp"

using namespace aden;

static void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg = small_run_config();
  cfg.model.training_mode = static_cast<TrainingMode>(state.range(0));
  Checkpoint ck = initial_checkpoint(cfg);
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  const EpisodeSampler sampler(cfg.data);
  std::uint64_t step = 0;
  for (auto _ : state) {
    const auto batch = sample_batch(sampler, cfg.train.batch_size, cfg.seed, step);
    train_step(model, ck.params, batch, sampler, cfg.train.adam, step_seed(cfg.seed, step, 1));
    ++step;
  }
  state.SetLabel(to_string(cfg.model.training_mode));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
