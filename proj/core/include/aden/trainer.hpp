#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aden/config.hpp"
#include "aden/eval.hpp"
#include "aden/model.hpp"
#include "aden/nnet.hpp"
#include "aden/synthdata.hpp"

namespace aden {

/// Indices of the k hypotheses closest to gt under pose_distance with
/// weight lambda_t, nearest first; ties go to the lower index.
std::vector<std::size_t> wta_select(const std::vector<Pose>& hypotheses, const Pose& gt,
                                    std::size_t k, double lambda_t);

struct GeneratorLoss {
  double loss = 0.0;
  Tensor2 grad_raw;  // M x 7, zero outside the selected rows
  std::vector<std::size_t> selected;
};

/// Mean over the k selected hypotheses of rotation geodesic error plus
/// translation L2 error, with the gradient w.r.t. the raw 7-vectors.
GeneratorLoss generator_loss(const Tensor2& raw, const Pose& gt, std::size_t k, double lambda_t);

/// Negative poses for discriminator training for one view.
/// generated_clean returns `clean` as is; generated_noisy regenerates from
/// queries + N(0, sigma^2) noise; random_grid draws Haar rotations with
/// translations from the training prior.
std::vector<Pose> make_negatives(const AdenModel& model, const ParamStore& params,
                                 const FusedContext& ctx, std::size_t view,
                                 const std::vector<Pose>& clean, const EpisodeSampler& sampler,
                                 Rng& rng);

struct LossBreakdown {
  double generator = 0.0;      // L_g
  double discriminator = 0.0;  // L_d, or the density NLL in kde_nll / mm_nll mode
  double total = 0.0;
};

/// Joint loss over the non-reference views of a batch, averaged over views.
/// `noise_seed` fixes query noise and random negatives so the loss is a
/// deterministic function of the parameters. Accumulates gradients into
/// `grads` when non-null.
LossBreakdown batch_loss(const AdenModel& model, const ParamStore& params,
                         const std::vector<Episode>& batch, const EpisodeSampler& sampler,
                         std::uint64_t noise_seed, Gradients* grads);

struct StepMetrics {
  std::uint64_t step = 0;
  LossBreakdown loss;
};

/// One Adam update on the joint loss. Throws NumericalDivergence when a loss,
/// gradient or parameter becomes non-finite.
StepMetrics train_step(const AdenModel& model, ParamStore& params,
                       const std::vector<Episode>& batch, const EpisodeSampler& sampler,
                       const AdamConfig& adam, std::uint64_t noise_seed);

/// Inference method matching a training mode: the discriminator for
/// contrastive training, otherwise the density the model was trained with.
InferenceMethod default_inference(const ModelConfig& m);

/// Deterministic seeds for step `step` of a run.
std::uint64_t step_seed(std::uint64_t run_seed, std::uint64_t step, std::uint64_t stream);

/// Training batch for a given step, a pure function of (seed, step).
std::vector<Episode> sample_batch(const EpisodeSampler& sampler, std::size_t batch_size,
                                  std::uint64_t run_seed, std::uint64_t step);

struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
  MetricReport eval;
};

struct Checkpoint {
  RunConfig config;
  ParamStore params;
  std::size_t epochs_done = 0;
  std::vector<EpochRecord> history;
};

/// Freshly initialized parameters for the run.
Checkpoint initial_checkpoint(const RunConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains until cfg.train.epochs epochs are done, continuing from `resume`
/// when given. Each epoch ends with a held-out evaluation snapshot.
Checkpoint train_loop(const RunConfig& cfg, std::optional<Checkpoint> resume = std::nullopt,
                      const EpochCallback& on_epoch = {});

/// Metrics CSV: config-hash comment line, header, one row per epoch.
std::string metrics_csv(const Checkpoint& ckpt);

}  // namespace aden
