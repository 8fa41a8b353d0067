#include <gtest/gtest.h>

#include <cmath>

#include "aden/errors.hpp"
#include "aden/model.hpp"
#include "aden/trainer.hpp"

using namespace aden;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_hypotheses = 16;
  c.query_dim = 16;
  c.hidden_width = 16;
  c.random_negatives = 32;
  return c;
}

struct Fixture {
  explicit Fixture(ModelConfig c = tiny_config(), std::size_t fdim = 12) : model(std::move(c), fdim) {
    Rng rng(42);
    model.init(params, rng);
  }
  AdenModel model;
  ParamStore params;
};

Eigen::MatrixXd random_features(Rng& rng, Eigen::Index n, Eigen::Index f) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(n, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = tiny_config();
  c.wta_k = 17;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.noise_variance = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.noise_variance = 9.0;
  EXPECT_DOUBLE_EQ(c.noise_stddev(), 3.0);
  c.noise_law = NoiseLaw::stddev;
  EXPECT_DOUBLE_EQ(c.noise_stddev(), 9.0);
  EXPECT_THROW(training_mode_from_string("gan"), ConfigError);
  EXPECT_EQ(negative_mode_from_string("random_grid"), NegativeMode::random_grid);
}

TEST(FuseContext, IdenticalViewsDifferOnlyByReferenceFlag) {
  Fixture fx;
  Rng rng(1);
  const Eigen::MatrixXd one = random_features(rng, 1, 12);
  Eigen::MatrixXd f(2, 12);
  f << one, one;
  const Tensor2 in = fx.model.context_input(f);
  EXPECT_EQ(in.row(0).head(36), in.row(1).head(36));
  EXPECT_EQ(in(0, 36), 1.0);
  EXPECT_EQ(in(1, 36), 0.0);
  const FusedContext ctx = fx.model.fuse_context(fx.params, f);
  EXPECT_GT((ctx.g.row(0) - ctx.g.row(1)).norm(), 0.0);
}

TEST(FuseContext, EquivariantInNonReferenceViews) {
  Fixture fx;
  Rng rng(2);
  const Eigen::MatrixXd f = random_features(rng, 4, 12);
  Eigen::MatrixXd p(4, 12);
  p << f.row(0), f.row(3), f.row(1), f.row(2);
  const FusedContext a = fx.model.fuse_context(fx.params, f);
  const FusedContext b = fx.model.fuse_context(fx.params, p);
  EXPECT_LT((a.g.row(0) - b.g.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.g.row(3) - b.g.row(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.g.row(1) - b.g.row(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.g.row(2) - b.g.row(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FuseContext, FiniteUnderFuzz) {
  Fixture fx;
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::MatrixXd f = 10.0 * random_features(rng, 2, 12);
    ASSERT_TRUE(fx.model.fuse_context(fx.params, f).g.allFinite());
  }
}

TEST(FuseContext, ShapeErrors) {
  Fixture fx;
  Rng rng(4);
  EXPECT_THROW(fx.model.fuse_context(fx.params, random_features(rng, 1, 12)), ShapeMismatch);
  EXPECT_THROW(fx.model.fuse_context(fx.params, random_features(rng, 3, 11)), ShapeMismatch);
}

TEST(Generator, EmitsUnitQuaternions) {
  Fixture fx;
  Rng rng(5);
  const FusedContext ctx = fx.model.fuse_context(fx.params, random_features(rng, 3, 12));
  const GeneratorOutput out = fx.model.generate_hypotheses(fx.params, ctx, 1);
  ASSERT_EQ(out.poses.size(), 16u);
  EXPECT_EQ(out.raw.rows(), 16);
  for (std::size_t m = 0; m < out.poses.size(); ++m) {
    EXPECT_NEAR(out.poses[m].rotation.quaternion().norm(), 1.0, 1e-12);
    const Vec4 raw = out.raw.row(static_cast<Eigen::Index>(m)).head<4>().transpose();
    EXPECT_LT((canonical_sign(raw / raw.norm()) - out.poses[m].rotation.quaternion()).norm(), 1e-12);
  }
  EXPECT_EQ(fx.model.generate_hypotheses(fx.params, ctx, 1, 5).poses.size(), 5u);
}

TEST(Generator, SingleHypothesis) {
  ModelConfig c = tiny_config();
  c.num_hypotheses = 1;
  Fixture fx(c);
  Rng rng(6);
  const FusedContext ctx = fx.model.fuse_context(fx.params, random_features(rng, 2, 12));
  EXPECT_EQ(fx.model.generate_hypotheses(fx.params, ctx, 1).poses.size(), 1u);
}

TEST(Generator, DistinctQueriesGiveDistinctHypotheses) {
  Fixture fx;
  Rng rng(7);
  const FusedContext ctx = fx.model.fuse_context(fx.params, random_features(rng, 2, 12));
  int collisions = 0;
  for (int t = 0; t < 1000; ++t) {
    const GeneratorOutput out = fx.model.generate_from_queries(fx.params, ctx, 1, Tensor2(random_features(rng, 2, 16)));
    if (pose_distance(out.poses[0], out.poses[1]) < 1e-9) ++collisions;
  }
  EXPECT_EQ(collisions, 0);
}

TEST(Discriminator, DuplicatePosesScoreEqually) {
  Fixture fx;
  Rng rng(8);
  const FusedContext ctx = fx.model.fuse_context(fx.params, random_features(rng, 2, 12));
  const Pose p{random_rotation(rng), Vec3(0, 0, 1)};
  const ScoreSet s = fx.model.score_hypotheses(fx.params, ctx, 1, {p, p, {random_rotation(rng), Vec3::Zero()}}, p);
  EXPECT_EQ(s.sample_logits[0], s.sample_logits[1]);
  ASSERT_TRUE(s.gt_logit.has_value());
  EXPECT_EQ(*s.gt_logit, s.sample_logits[0]);
  EXPECT_FALSE(fx.model.score_hypotheses(fx.params, ctx, 1, {p}).gt_logit.has_value());
}

TEST(Discriminator, PoseFeaturesLayout) {
  Rng rng(9);
  const Pose p{random_rotation(rng), Vec3(1, 2, 3)};
  const Tensor2 f = pose_features({p});
  const Mat3 r = p.rotation.matrix();
  EXPECT_EQ(f(0, 5), r(1, 2));
  EXPECT_EQ(f(0, 11), 3.0);
}

TEST(Discriminator, PoseFeaturesBackwardMatchesFiniteDifferences) {
  Rng rng(10);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor2 raw(3, 7), up(3, 12);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = nd(rng);
  auto f = [&](const Tensor2& r) {
    std::vector<Pose> poses;
    for (Eigen::Index i = 0; i < r.rows(); ++i) poses.push_back(raw_to_pose(r.row(i)));
    return (pose_features(poses).array() * up.array()).sum();
  };
  const Tensor2 g = pose_features_backward(raw, up);
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    Tensor2 a = raw, b = raw;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    EXPECT_NEAR(g.data()[i], (f(a) - f(b)) / 2e-6, 1e-6);
  }
}

TEST(Discriminator, InitialLossNearUniform) {
  // Untrained discriminator: -log p(gt) sits near log(M + 1).
  ModelConfig c = tiny_config();
  c.num_hypotheses = 128;
  c.query_dim = 64;
  c.hidden_width = 64;
  c.negative_mode = NegativeMode::generated_clean;
  DataConfig d;
  d.feature_dim = 32;
  const EpisodeSampler sampler(d);
  Fixture fx(c, 32);
  std::vector<Episode> batch;
  Rng rng(11);
  for (int i = 0; i < 8; ++i) batch.push_back(sampler.sample(rng, 2, 1));
  const LossBreakdown l = batch_loss(fx.model, fx.params, batch, sampler, 1, nullptr);
  EXPECT_NEAR(l.discriminator, std::log(129.0), 1.0);
}

TEST(ScaleHead, PositiveScalesAboveFloor) {
  ModelConfig c = tiny_config();
  c.training_mode = TrainingMode::mm_nll;
  Fixture fx(c);
  Rng rng(12);
  const FusedContext ctx = fx.model.fuse_context(fx.params, random_features(rng, 2, 12));
  for (double s : fx.model.hypothesis_scales(fx.params, ctx, 1)) EXPECT_GT(s, c.min_scale);
  EXPECT_TRUE(fx.model.has_scale_head());
  EXPECT_FALSE(Fixture().model.has_scale_head());
}
