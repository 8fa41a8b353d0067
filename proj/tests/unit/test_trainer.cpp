#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aden/errors.hpp"
#include "aden/trainer.hpp"

using namespace aden;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.model.num_hypotheses = 12;
  c.model.query_dim = 12;
  c.model.hidden_width = 12;
  c.model.head_layers = 1;
  c.model.embed_layers = 1;
  c.model.random_negatives = 20;
  c.data.feature_dim = 16;
  c.data.landmarks = 8;
  c.data.views_max = 3;
  c.train.epochs = 2;
  c.train.steps_per_epoch = 3;
  c.train.batch_size = 2;
  c.train.snapshot_scenes = 2;
  c.eval.scenes = 2;
  c.eval.scene_views = 3;
  c.eval.views = 2;
  c.eval.resamplings = 1;
  return c;
}

Tensor2 raw_from(const std::vector<Pose>& poses) {
  Tensor2 raw(static_cast<Eigen::Index>(poses.size()), 7);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    raw.row(static_cast<Eigen::Index>(i)) << poses[i].rotation.quaternion().transpose(), poses[i].translation.transpose();
  }
  return raw;
}

void expect_params_equal(const ParamStore& a, const ParamStore& b) {
  ASSERT_EQ(a.params().size(), b.params().size());
  for (const auto& [name, t] : a.params()) EXPECT_EQ(t, b.get(name)) << name;
}

}  // namespace

TEST(WtaSelect, MatchesSortOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Pose> h;
    for (int i = 0; i < 40; ++i) h.push_back({random_rotation(rng), Vec3(0, 0, 1)});
    const Pose gt{random_rotation(rng), Vec3(0, 0, 1.1)};
    std::vector<std::size_t> order(h.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pose_distance(h[a], gt) < pose_distance(h[b], gt);
    });
    for (std::size_t k : {1u, 5u, 40u}) {
      EXPECT_EQ(wta_select(h, gt, k, 1.0), std::vector<std::size_t>(order.begin(), order.begin() + k));
    }
  }
}

TEST(WtaSelect, TiesGoToLowerIndexAndBoundsChecked) {
  const Pose p = Pose::identity();
  EXPECT_EQ(wta_select({p, p, p}, p, 2, 1.0), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(wta_select({p}, p, 0, 1.0), InvalidArgument);
  EXPECT_THROW(wta_select({p}, p, 2, 1.0), InvalidArgument);
}

TEST(GeneratorLoss, HandExamples) {
  const Pose gt{Rotation::identity(), Vec3(0, 0, 1)};
  const Pose off{Rotation::from_axis_angle(Vec3::UnitX(), 0.3), Vec3(0, 0.4, 1)};
  const Pose far{Rotation::from_axis_angle(Vec3::UnitY(), 2.0), Vec3(0, 0, 1)};
  const GeneratorLoss l1 = generator_loss(raw_from({far, off}), gt, 1, 1.0);
  EXPECT_NEAR(l1.loss, 0.3 + 0.4, 1e-12);
  EXPECT_EQ(l1.selected, std::vector<std::size_t>{1});
  const GeneratorLoss l2 = generator_loss(raw_from({far, off}), gt, 2, 1.0);
  EXPECT_NEAR(l2.loss, 0.5 * (2.0 + 0.7), 1e-12);
  EXPECT_NEAR(generator_loss(raw_from({gt}), gt, 1, 1.0).loss, 0.0, 1e-12);
  EXPECT_THROW(generator_loss(Tensor2::Zero(2, 6), gt, 1, 1.0), ShapeMismatch);
}

TEST(GeneratorLoss, NonSelectedRowsGetZeroGradient) {
  Rng rng(2);
  std::vector<Pose> h;
  for (int i = 0; i < 30; ++i) h.push_back({random_rotation(rng), Vec3(0.1 * i, 0, 1)});
  const Pose gt{random_rotation(rng), Vec3(0, 0, 1)};
  const GeneratorLoss l = generator_loss(raw_from(h), gt, 3, 1.0);
  for (Eigen::Index m = 0; m < 30; ++m) {
    const bool sel = std::find(l.selected.begin(), l.selected.end(), static_cast<std::size_t>(m)) != l.selected.end();
    if (sel) {
      EXPECT_GT(l.grad_raw.row(m).norm(), 0.0);
    } else {
      EXPECT_EQ(l.grad_raw.row(m).norm(), 0.0);
    }
  }
}

TEST(GeneratorLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor2 raw(6, 7);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = nd(rng);
  const Pose gt{random_rotation(rng), Vec3(0.2, -0.1, 1.0)};
  const GeneratorLoss l = generator_loss(raw, gt, 2, 1.0);
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    Tensor2 a = raw, b = raw;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    const double fd = (generator_loss(a, gt, 2, 1.0).loss - generator_loss(b, gt, 2, 1.0).loss) / 2e-6;
    EXPECT_NEAR(l.grad_raw.data()[i], fd, 1e-6);
  }
}

struct NegFixture {
  explicit NegFixture(ModelConfig m) : model(m, 16), sampler([] {
    DataConfig d;
    d.feature_dim = 16;
    d.landmarks = 8;
    return d;
  }()) {
    Rng rng(4);
    model.init(params, rng);
    Rng erng(5);
    ep = sampler.sample(erng, 3, 1);
    ctx = model.fuse_context(params, ep.view_features);
    clean = model.generate_hypotheses(params, ctx, 1).poses;
  }
  AdenModel model;
  EpisodeSampler sampler;
  ParamStore params;
  Episode ep;
  FusedContext ctx;
  std::vector<Pose> clean;

  std::vector<Pose> negatives(std::uint64_t seed) {
    Rng rng(seed);
    return make_negatives(model, params, ctx, 1, clean, sampler, rng);
  }
};

double mean_spread(const std::vector<Pose>& a, const std::vector<Pose>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += geodesic_distance(a[i].rotation, b[i].rotation);
  return s / static_cast<double>(a.size());
}

TEST(MakeNegatives, ZeroVarianceEqualsClean) {
  ModelConfig m = tiny_run().model;
  m.noise_variance = 0.0;
  NegFixture fx(m);
  const auto neg = fx.negatives(1);
  ASSERT_EQ(neg.size(), fx.clean.size());
  for (std::size_t i = 0; i < neg.size(); ++i) EXPECT_EQ(neg[i].rotation, fx.clean[i].rotation);
  m.negative_mode = NegativeMode::generated_clean;
  m.noise_variance = 3.0;
  NegFixture cl(m);
  const auto same = cl.negatives(1);
  for (std::size_t i = 0; i < same.size(); ++i) EXPECT_EQ(same[i].rotation, cl.clean[i].rotation);
}

TEST(MakeNegatives, RandomGridIsSeededAndSized) {
  ModelConfig m = tiny_run().model;
  m.negative_mode = NegativeMode::random_grid;
  m.random_negatives = 500;
  NegFixture fx(m);
  const auto a = fx.negatives(7), b = fx.negatives(7), c = fx.negatives(8);
  ASSERT_EQ(a.size(), 500u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rotation, b[i].rotation);
  EXPECT_FALSE(a[0].rotation == c[0].rotation);
}

TEST(MakeNegatives, SpreadGrowsWithNoise) {
  std::vector<double> spread;
  for (double var : {0.3, 3.0, 30.0}) {
    ModelConfig m = tiny_run().model;
    m.noise_variance = var;
    NegFixture fx(m);
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) s += mean_spread(fx.negatives(seed), fx.clean);
    spread.push_back(s);
  }
  EXPECT_LT(spread[0], spread[1]);
  EXPECT_LT(spread[1], spread[2]);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  const RunConfig cfg = tiny_run();
  Checkpoint ck = initial_checkpoint(cfg);
  const ParamStore before = ck.params;
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  const EpisodeSampler sampler(cfg.data);
  AdamConfig adam = cfg.train.adam;
  adam.lr = 0.0;
  const StepMetrics m = train_step(model, ck.params, sample_batch(sampler, 2, 1, 0), sampler, adam, 9);
  expect_params_equal(before, ck.params);
  EXPECT_GT(m.loss.generator, 0.0);
  EXPECT_GT(m.loss.discriminator, 0.0);
  EXPECT_EQ(m.step, 1u);
}

TEST(TrainStep, OverfitsFixedBatch) {
  // Fixed negatives, so the joint loss is an ordinary objective on one batch.
  for (TrainingMode mode : {TrainingMode::contrastive, TrainingMode::kde_nll, TrainingMode::mm_nll}) {
    RunConfig cfg = tiny_run();
    cfg.model.training_mode = mode;
    cfg.model.negative_mode = NegativeMode::random_grid;
    Checkpoint ck = initial_checkpoint(cfg);
    const AdenModel model(cfg.model, cfg.data.feature_dim);
    const EpisodeSampler sampler(cfg.data);
    const auto batch = sample_batch(sampler, 2, 3, 0);
    const double first = batch_loss(model, ck.params, batch, sampler, 1, nullptr).total;
    for (int s = 0; s < 200; ++s) train_step(model, ck.params, batch, sampler, cfg.train.adam, 1);
    const double last = batch_loss(model, ck.params, batch, sampler, 1, nullptr).total;
    EXPECT_LT(last, 0.8 * first) << to_string(mode) << " " << first << " -> " << last;
  }
}

TEST(TrainStep, DivergenceIsReported) {
  const RunConfig cfg = tiny_run();
  Checkpoint ck = initial_checkpoint(cfg);
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  const EpisodeSampler sampler(cfg.data);
  const Mlp& gen = model.generator_head();
  ck.params.get_mutable(gen.bias_name(gen.spec().num_layers() - 1))(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train_step(model, ck.params, sample_batch(sampler, 2, 1, 0), sampler, cfg.train.adam, 1),
               NumericalDivergence);
}

TEST(StepSeed, StreamsAndStepsDiffer) {
  EXPECT_EQ(step_seed(1, 2, 0), step_seed(1, 2, 0));
  EXPECT_NE(step_seed(1, 2, 0), step_seed(1, 2, 1));
  EXPECT_NE(step_seed(1, 2, 0), step_seed(1, 3, 0));
  EXPECT_NE(step_seed(1, 2, 0), step_seed(2, 2, 0));
}

TEST(TrainLoop, ZeroEpochsEqualsInitialization) {
  RunConfig cfg = tiny_run();
  cfg.train.epochs = 0;
  const Checkpoint ck = train_loop(cfg);
  expect_params_equal(ck.params, initial_checkpoint(cfg).params);
  EXPECT_TRUE(ck.history.empty());
  EXPECT_EQ(ck.params.step(), 0u);
}

TEST(TrainLoop, DeterministicTrace) {
  const RunConfig cfg = tiny_run();
  const Checkpoint a = train_loop(cfg), b = train_loop(cfg);
  expect_params_equal(a.params, b.params);
  EXPECT_EQ(metrics_csv(a), metrics_csv(b));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[1].step, 6u);
}

TEST(TrainLoop, ResumeReproducesTrace) {
  RunConfig cfg = tiny_run();
  cfg.train.epochs = 3;
  const Checkpoint full = train_loop(cfg);
  RunConfig half = cfg;
  half.train.epochs = 1;
  const Checkpoint first = train_loop(half);
  const Checkpoint resumed = train_loop(cfg, first);
  expect_params_equal(full.params, resumed.params);
  EXPECT_EQ(metrics_csv(full), metrics_csv(resumed));
}

TEST(TrainLoop, CallbackAndCsvLayout) {
  const RunConfig cfg = tiny_run();
  int calls = 0;
  const Checkpoint ck = train_loop(cfg, std::nullopt, [&](const EpochRecord& r) {
    ++calls;
    EXPECT_EQ(r.epoch, static_cast<std::size_t>(calls));
  });
  EXPECT_EQ(calls, 2);
  const std::string csv = metrics_csv(ck);
  EXPECT_EQ(csv.rfind("# config_hash=" + config_hash(cfg) + "\n", 0), 0u);
  EXPECT_NE(csv.find("epoch,step,L_g,L_d,acc@5,acc@10,acc@15,closest_err_deg\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(DefaultInference, FollowsTrainingMode) {
  ModelConfig m;
  EXPECT_EQ(default_inference(m), InferenceMethod::discriminator);
  m.training_mode = TrainingMode::kde_nll;
  EXPECT_EQ(default_inference(m), InferenceMethod::kde);
  m.training_mode = TrainingMode::mm_nll;
  EXPECT_EQ(default_inference(m), InferenceMethod::mm);
}
