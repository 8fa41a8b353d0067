#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "aden/density.hpp"
#include "aden/errors.hpp"

using namespace aden;

namespace {

Rotation rz(double a) { return Rotation::from_axis_angle(Vec3::UnitZ(), a); }

std::vector<double> random_logits(Rng& rng, std::size_t n, double s = 2.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Term-by-term oracles written without shared helpers.
double kde_oracle(const std::vector<Rotation>& s, double h, const Rotation& q) {
  long double sum = 0.0L;
  for (const auto& p : s) {
    const double c = std::min(1.0, std::abs(p.quaternion().dot(q.quaternion())));
    sum += std::exp(-2.0 * std::acos(c) / h);
  }
  return static_cast<double>(sum / (s.size() * h * h * h));
}

double mm_oracle(const std::vector<MixtureComponent>& cs, const Rotation& q) {
  long double sum = 0.0L;
  for (const auto& c : cs) {
    const double cc = std::min(1.0, std::abs(c.pose.quaternion().dot(q.quaternion())));
    sum += c.weight / std::pow(c.scale, 3) * std::exp(-2.0 * std::acos(cc) / c.scale);
  }
  return static_cast<double>(sum);
}

std::vector<MixtureComponent> random_mixture(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<MixtureComponent> cs;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cs.push_back({random_rotation(rng), u(rng), 0.1 + u(rng)});
    total += cs.back().weight;
  }
  for (auto& c : cs) c.weight /= total;
  return cs;
}

}  // namespace

TEST(Contrastive, UniformCase) {
  const ScoreSet s{{0, 0, 0, 0}, 0.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(contrastive_prob(s, ScoreQuery::sample(i)), 0.2, 1e-15);
  EXPECT_NEAR(contrastive_prob(s, ScoreQuery::ground_truth()), 0.2, 1e-15);
  EXPECT_NEAR(contrastive_nll(s).loss, std::log(5.0), 1e-12);
}

TEST(Contrastive, ClosedForm) {
  const ScoreSet s{{0, 0}, std::log(8.0)};
  EXPECT_NEAR(contrastive_prob(s, ScoreQuery::ground_truth()), 0.8, 1e-12);
}

TEST(Contrastive, InferenceOmitsGroundTruth) {
  const ScoreSet s{{0, 0, 0, 0}, std::nullopt};
  EXPECT_NEAR(contrastive_prob(s, ScoreQuery::sample(2)), 0.25, 1e-15);
  EXPECT_THROW(contrastive_prob(s, ScoreQuery::ground_truth()), MissingGroundTruth);
  EXPECT_THROW(contrastive_nll(s), MissingGroundTruth);
}

TEST(Contrastive, ShiftInvarianceAndNormalization) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    ScoreSet s{random_logits(rng, 9), random_logits(rng, 1)[0]};
    ScoreSet shifted = s;
    for (double& x : shifted.sample_logits) x += 7.5;
    *shifted.gt_logit += 7.5;
    const auto p = contrastive_probs(s), q = contrastive_probs(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(p[i], q[i], 1e-12);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Contrastive, LossDecreasesAsGroundTruthDominates) {
  double prev = 1e300;
  for (double g = -5; g <= 60; g += 5) {
    const double l = contrastive_nll(ScoreSet{{0.0, 1.0, -1.0}, g}).loss;
    // Strict until the loss rounds to zero.
    if (g <= 30) {
      EXPECT_LT(l, prev);
    } else {
      EXPECT_LE(l, prev);
    }
    EXPECT_GE(l, 0.0);
    prev = l;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const double eps = 1e-5;
  for (int t = 0; t < 50; ++t) {
    ScoreSet s{random_logits(rng, 6), random_logits(rng, 1)[0]};
    const ContrastiveLoss cl = contrastive_nll(s);
    for (std::size_t i = 0; i <= s.sample_logits.size(); ++i) {
      ScoreSet p = s, m = s;
      double analytic;
      if (i < s.sample_logits.size()) {
        p.sample_logits[i] += eps;
        m.sample_logits[i] -= eps;
        analytic = cl.grad_samples[i];
      } else {
        *p.gt_logit += eps;
        *m.gt_logit -= eps;
        analytic = cl.grad_gt;
      }
      const double num = (contrastive_nll(p).loss - contrastive_nll(m).loss) / (2 * eps);
      EXPECT_LT(std::abs(num - analytic) / std::max({std::abs(num), std::abs(analytic), 1e-3}), 1e-6);
    }
  }
}

TEST(Contrastive, ExtremeLogitsAreClampedNotOverflowed) {
  const std::size_t before = logit_clamp_events();
  const ScoreSet s{{1e6, -1e6}, 0.0};
  const auto p = contrastive_probs(s);
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(logit_clamp_events(), before);
}

TEST(Kde, FormulaAtZeroDistance) {
  const Rotation r = rz(0.3);
  EXPECT_NEAR(kde_density(KdeModel({r}, 0.5), r), 8.0, 1e-12);
}

TEST(Kde, TwoSampleClosedForm) {
  const double h = 0.4;
  const KdeModel m({Rotation::identity(), rz(h)}, h);
  EXPECT_NEAR(kde_density(m, Rotation::identity()), (1.0 + std::exp(-1.0)) / (2 * h * h * h), 1e-12);
}

TEST(Kde, MatchesBruteForceOracle) {
  Rng rng(3);
  std::uniform_real_distribution<double> uh(0.05, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<Rotation> s;
    for (int i = 0; i < 1 + t % 17; ++i) s.push_back(random_rotation(rng));
    const double h = uh(rng);
    const Rotation q = random_rotation(rng);
    const double want = kde_oracle(s, h, q);
    EXPECT_NEAR(kde_density(KdeModel(s, h), q), want, 1e-12 * std::max(1.0, want));
  }
}

TEST(Kde, RejectsInvalidModels) {
  EXPECT_THROW(KdeModel({}, 0.1), InvalidArgument);
  EXPECT_THROW(KdeModel({Rotation::identity()}, 0.0), InvalidArgument);
  EXPECT_THROW(KdeModel({Rotation::identity()}, -1.0), InvalidArgument);
}

TEST(Mixture, HandCases) {
  const Rotation r = rz(1.0);
  EXPECT_NEAR(mm_density(MixtureModel({{r, 1.0, 1.0}}), r), 1.0, 1e-15);
  const double one = mm_density(MixtureModel({{r, 1.0, 0.3}}), rz(0.7));
  const double two = mm_density(MixtureModel({{r, 0.5, 0.3}, {r, 0.5, 0.3}}), rz(0.7));
  EXPECT_NEAR(one, two, 1e-15);
}

TEST(Mixture, MatchesBruteForceOracle) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto cs = random_mixture(rng, 1 + t % 13);
    const Rotation q = random_rotation(rng);
    const double want = mm_oracle(cs, q);
    EXPECT_NEAR(mm_density(MixtureModel(cs), q), want, 1e-12 * std::max(1.0, want));
  }
}

TEST(Mixture, RejectsInvalidModels) {
  EXPECT_THROW(MixtureModel({{Rotation::identity(), 0.5, 1.0}}), InvalidArgument);
  EXPECT_THROW(MixtureModel({{Rotation::identity(), 1.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(MixtureModel({{Rotation::identity(), 1.5, 1.0}, {Rotation::identity(), -0.5, 1.0}}),
               InvalidArgument);
}

TEST(Mixture, EqualsKdeUnderUniformWeights) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<Rotation> s;
    std::vector<MixtureComponent> cs;
    const int n = 1 + t % 9;
    for (int i = 0; i < n; ++i) s.push_back(random_rotation(rng));
    for (const auto& r : s) cs.push_back({r, 1.0 / n, 0.13});
    const Rotation q = random_rotation(rng);
    EXPECT_EQ(kde_density(KdeModel(s, 0.13), q), mm_density(MixtureModel(cs), q));
  }
}

TEST(DensityNll, HandCases) {
  const Rotation r = rz(0.2);
  EXPECT_NEAR(density_nll(KdeModel({r}, 1.0), r).loss, 0.0, 1e-15);
  EXPECT_NEAR(density_nll(MixtureModel({{r, 1.0, 1.0}}), r).loss, 0.0, 1e-15);
}

TEST(DensityNll, MatchesNegativeLogDensity) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    std::vector<Rotation> s;
    for (int i = 0; i < 5; ++i) s.push_back(random_rotation(rng));
    const Rotation q = random_rotation(rng);
    const KdeModel k(s, 0.6);
    EXPECT_NEAR(density_nll(k, q).loss, -std::log(kde_density(k, q)), 1e-10);
    const auto cs = random_mixture(rng, 4);
    EXPECT_NEAR(density_nll(MixtureModel(cs), q).loss, -std::log(mm_density(MixtureModel(cs), q)), 1e-10);
  }
}

TEST(DensityNll, FarFromSamplesStaysFinite) {
  const KdeModel k({Rotation::identity()}, 0.01);
  const KdeNll n = density_nll(k, rz(std::numbers::pi));
  EXPECT_TRUE(std::isfinite(n.loss));
  EXPECT_GT(n.loss, 300.0);
}

TEST(DensityNll, KdeGradientsMatchFiniteDifferences) {
  Rng rng(7);
  const double eps = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const Rotation gt = random_rotation(rng);
    std::vector<Rotation> s;
    for (int i = 0; i < 4; ++i) {
      s.push_back(gt * Rotation::from_axis_angle(Vec3(1, 2, 3 + i), 0.3 + 0.4 * i));
    }
    const double h = 0.35;
    const KdeNll n = density_nll(KdeModel(s, h), gt);
    const double dh = (density_nll(KdeModel(s, h + eps), gt).loss - density_nll(KdeModel(s, h - eps), gt).loss) / (2 * eps);
    EXPECT_NEAR(n.grad_bandwidth, dh, 1e-4 * std::max(1.0, std::abs(dh)));
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (int c = 0; c < 4; ++c) {
        auto sp = s, sm = s;
        Vec4 qp = s[i].quaternion(), qm = qp;
        qp[c] += eps;
        qm[c] -= eps;
        sp[i] = Rotation::from_quaternion(qp);
        sm[i] = Rotation::from_quaternion(qm);
        const double num = (density_nll(KdeModel(sp, h), gt).loss - density_nll(KdeModel(sm, h), gt).loss) / (2 * eps);
        EXPECT_NEAR(n.grad_quaternions[i][c], num, 1e-4 * std::max(1.0, std::abs(num)));
      }
    }
  }
}

TEST(DensityNll, MixtureScaleGradientsMatchFiniteDifferences) {
  Rng rng(8);
  const double eps = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const Rotation gt = random_rotation(rng);
    auto cs = random_mixture(rng, 4);
    for (std::size_t i = 0; i < cs.size(); ++i) cs[i].pose = gt * Rotation::from_axis_angle(Vec3(1, 0, 1), 0.2 + 0.3 * i);
    const MixtureNll n = density_nll(MixtureModel(cs), gt);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      auto cp = cs, cm = cs;
      cp[i].scale += eps;
      cm[i].scale -= eps;
      const double num = (density_nll(MixtureModel(cp), gt).loss - density_nll(MixtureModel(cm), gt).loss) / (2 * eps);
      EXPECT_NEAR(n.grad_scales[i], num, 1e-4 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST(DensityNll, PermutationInvariant) {
  Rng rng(9);
  std::vector<Rotation> s;
  for (int i = 0; i < 6; ++i) s.push_back(random_rotation(rng));
  const Rotation q = random_rotation(rng);
  auto r = s;
  std::reverse(r.begin(), r.end());
  EXPECT_NEAR(density_nll(KdeModel(s, 0.3), q).loss, density_nll(KdeModel(r, 0.3), q).loss, 1e-12);
  auto cs = random_mixture(rng, 5);
  auto rc = cs;
  std::rotate(rc.begin(), rc.begin() + 2, rc.end());
  EXPECT_NEAR(density_nll(MixtureModel(cs), q).loss, density_nll(MixtureModel(rc), q).loss, 1e-12);
}

TEST(LogPartition, ConstantScores) {
  const GridOracle g = GridOracle::random(100, 1);
  EXPECT_NEAR(g.node_weight, kSo3Volume / 100.0, 1e-15);
  EXPECT_NEAR(log_partition_brute([](const Rotation&) { return 0.0; }, g), std::log(kSo3Volume), 1e-12);
  EXPECT_NEAR(log_partition_brute([](const Rotation&) { return 3.5; }, g), 3.5 + std::log(kSo3Volume), 1e-12);
  EXPECT_NEAR(log_partition_brute([](const Rotation&) { return 900.0; }, g), 900.0 + std::log(kSo3Volume), 1e-9);
}

TEST(LogPartition, GridSelfConvergence) {
  Rng rng(10);
  std::vector<Rotation> s;
  for (int i = 0; i < 50; ++i) s.push_back(random_rotation(rng));
  const KdeModel k(s, 0.3);
  const ScoreFn score = [&](const Rotation& r) { return std::log(kde_density(k, r)); };
  const double coarse = log_partition_brute(score, GridOracle::random(10000, 11));
  const double fine = log_partition_brute(score, GridOracle::random(100000, 12));
  EXPECT_LT(std::abs(coarse - fine), 1e-2);
}

TEST(LogPartition, KdeLogZInvariantUnderGlobalRotation) {
  Rng rng(13);
  std::vector<Rotation> s, moved;
  for (int i = 0; i < 50; ++i) s.push_back(random_rotation(rng));
  const Rotation g = random_rotation(rng);
  for (const auto& r : s) moved.push_back(g * r);
  const GridOracle grid = GridOracle::random(100000, 14);
  const KdeModel a(s, 0.3), b(moved, 0.3);
  const double za = log_partition_brute([&](const Rotation& r) { return std::log(kde_density(a, r)); }, grid);
  const double zb = log_partition_brute([&](const Rotation& r) { return std::log(kde_density(b, r)); }, grid);
  EXPECT_LT(std::abs(za - zb), 1e-2);
}

TEST(LogPartitionGrad, IdenticalSamples) {
  const Rotation r = rz(0.4);
  const std::vector<Rotation> s(7, r);
  const ScoreGradFn g = [](const Rotation& q) -> Eigen::VectorXd {
    return Eigen::Vector2d(q.w(), q.z());
  };
  const Eigen::VectorXd est = log_partition_grad_estimate(s, g);
  EXPECT_NEAR(est[0], r.w(), 1e-15);
  EXPECT_NEAR(est[1], r.z(), 1e-15);
}

TEST(MleSurrogate, Examples) {
  EXPECT_NEAR(mle_surrogate_loss(2.0, {1.0, 2.0, 3.0}), 0.0, 1e-15);
  EXPECT_NEAR(mle_surrogate_loss(1.0, {0.0, 0.0}), -1.0, 1e-15);
}

TEST(MleSurrogate, GradientSignAgreesWithContrastive) {
  // d/dx* of the surrogate is -1; contrastive gradient is p* - 1 <= 0.
  Rng rng(15);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_logits(rng, 5);
    const double gt = random_logits(rng, 1)[0];
    const double eps = 1e-6;
    const double ds = (mle_surrogate_loss(gt + eps, x) - mle_surrogate_loss(gt - eps, x)) / (2 * eps);
    const double dc = contrastive_nll(ScoreSet{x, gt}).grad_gt;
    EXPECT_LT(ds, 0.0);
    EXPECT_LT(dc, 0.0);
  }
}
