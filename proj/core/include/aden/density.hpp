#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "aden/rotmath.hpp"

namespace aden {

/// Bandwidth used for KDE inference unless configured otherwise
/// (2-sigma angle of roughly 15 degrees).
inline constexpr double kDefaultKdeBandwidth = 0.13;

/// Logits are clamped to this magnitude before exponentiation.
inline constexpr double kLogitClamp = 60.0;

/// Haar volume of SO(3) under the unit-quaternion hemisphere convention.
inline constexpr double kSo3Volume = 9.8696044010893586188;  // pi^2

/// Number of logit clamping events since process start (diagnostics only).
std::size_t logit_clamp_events();

/// Discriminator logits for M hypotheses plus the optional ground-truth logit.
struct ScoreSet {
  std::vector<double> sample_logits;
  std::optional<double> gt_logit;
};

/// Query selector for contrastive_prob: a sample index or the ground truth.
struct ScoreQuery {
  static ScoreQuery sample(std::size_t i) { return {i, false}; }
  static ScoreQuery ground_truth() { return {0, true}; }
  std::size_t index = 0;
  bool is_gt = false;
};

/// e^x / (e^{x*} + sum_m e^{x_m}). The x* term is included whenever the
/// score set carries a ground-truth logit and omitted otherwise.
double contrastive_prob(const ScoreSet& s, ScoreQuery query);

/// Probabilities for every sample (and the ground truth last, if present).
std::vector<double> contrastive_probs(const ScoreSet& s);

struct ContrastiveLoss {
  double loss = 0.0;
  std::vector<double> grad_samples;  // d loss / d x_m
  double grad_gt = 0.0;              // d loss / d x*
};

/// -log p(GT). Throws MissingGroundTruth without a gt logit.
ContrastiveLoss contrastive_nll(const ScoreSet& s);

struct KdeModel {
  KdeModel(std::vector<Rotation> samples, double bandwidth = kDefaultKdeBandwidth);

  std::vector<Rotation> samples;
  double bandwidth;
  static constexpr int dim = 3;
};

struct MixtureComponent {
  Rotation pose;
  double weight = 1.0;
  double scale = 1.0;
};

struct MixtureModel {
  explicit MixtureModel(std::vector<MixtureComponent> components);

  std::vector<MixtureComponent> components;
  static constexpr int dim = 3;
};

/// (1 / (N h^3)) sum_n exp(-d(P, P_n) / h). Unnormalized on SO(3).
double kde_density(const KdeModel& model, const Rotation& query);

/// sum_n (w_n / h_n^3) exp(-d(P, P_n) / h_n).
double mm_density(const MixtureModel& model, const Rotation& query);

/// Angle between unit quaternions: 2 acos(|<a, b>|). Used by the density
/// gradients, which differentiate through the quaternion parameterization.
double quaternion_angle(const Vec4& a, const Vec4& b);

/// Gradient of quaternion_angle(target, raw / |raw|) with respect to the
/// unnormalized quaternion `raw`. Zero at the non-differentiable point d = 0.
Vec4 quaternion_angle_grad(const Vec4& target, const Vec4& raw);

struct KdeNll {
  double loss = 0.0;
  std::vector<double> grad_distances;  // w.r.t. each geodesic distance d(gt, P_n)
  std::vector<Vec4> grad_quaternions;  // w.r.t. each sample's quaternion
  double grad_bandwidth = 0.0;
};

struct MixtureNll {
  double loss = 0.0;
  std::vector<double> grad_distances;
  std::vector<Vec4> grad_quaternions;
  std::vector<double> grad_weights;
  std::vector<double> grad_scales;
};

/// -log kde_density at gt, with analytic gradients.
KdeNll density_nll(const KdeModel& model, const Rotation& gt);

/// -log mm_density at gt, with analytic gradients. Weight gradients are taken
/// with the weights as free variables (no simplex projection).
MixtureNll density_nll(const MixtureModel& model, const Rotation& gt);

/// Monte Carlo quadrature over SO(3) with equal node weights Vol/|nodes|.
struct GridOracle {
  explicit GridOracle(std::vector<Rotation> nodes);
  static GridOracle random(std::size_t n, std::uint64_t seed);

  std::vector<Rotation> nodes;
  double node_weight;
};

using ScoreFn = std::function<double(const Rotation&)>;

/// log( node_weight * sum_nodes e^{x(node)} ), max-subtracted.
double log_partition_brute(const ScoreFn& score, const GridOracle& oracle);

using ScoreGradFn = std::function<Eigen::VectorXd(const Rotation&)>;

/// Sampled estimate of grad log Z: the mean of grad x over samples drawn
/// from the model density.
Eigen::VectorXd log_partition_grad_estimate(const std::vector<Rotation>& samples,
                                            const ScoreGradFn& grad_fn);

/// -(x* - mean(x_m)): the sampled maximum-likelihood surrogate.
double mle_surrogate_loss(double gt_logit, const std::vector<double>& sample_logits);

}  // namespace aden
