#include "aden/density.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "aden/errors.hpp"

namespace aden {
namespace {

std::atomic<std::size_t> g_clamp_events{0};

double clamp_logit(double x) {
  if (x > kLogitClamp || x < -kLogitClamp) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
    return std::clamp(x, -kLogitClamp, kLogitClamp);
  }
  return x;
}

// Clamped logits in sample order, ground truth (if any) appended last.
std::vector<double> gather_logits(const ScoreSet& s) {
  std::vector<double> x;
  x.reserve(s.sample_logits.size() + 1);
  for (double v : s.sample_logits) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite logit");
    x.push_back(clamp_logit(v));
  }
  if (s.gt_logit) {
    if (!std::isfinite(*s.gt_logit)) throw InvalidArgument("non-finite ground-truth logit");
    x.push_back(clamp_logit(*s.gt_logit));
  }
  return x;
}

// Softmax in place; returns log of the normalizer.
double softmax_inplace(std::vector<double>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
  return mx + std::log(sum);
}

}  // namespace

std::size_t logit_clamp_events() { return g_clamp_events.load(); }

std::vector<double> contrastive_probs(const ScoreSet& s) {
  std::vector<double> x = gather_logits(s);
  if (x.empty()) throw InvalidArgument("empty score set");
  softmax_inplace(x);
  return x;
}

double contrastive_prob(const ScoreSet& s, ScoreQuery query) {
  if (query.is_gt && !s.gt_logit) throw MissingGroundTruth();
  if (!query.is_gt && query.index >= s.sample_logits.size()) {
    throw InvalidArgument("sample index out of range");
  }
  const std::vector<double> p = contrastive_probs(s);
  return query.is_gt ? p.back() : p[query.index];
}

ContrastiveLoss contrastive_nll(const ScoreSet& s) {
  if (!s.gt_logit) throw MissingGroundTruth();
  std::vector<double> p = gather_logits(s);
  const double gt = p.back();
  const double log_norm = softmax_inplace(p);

  ContrastiveLoss out;
  out.loss = log_norm - gt;
  out.grad_samples.assign(p.begin(), p.end() - 1);
  out.grad_gt = p.back() - 1.0;
  return out;
}

KdeModel::KdeModel(std::vector<Rotation> s, double h) : samples(std::move(s)), bandwidth(h) {
  if (samples.empty()) throw InvalidArgument("KDE needs at least one sample");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidArgument("KDE bandwidth must be positive");
  }
}

MixtureModel::MixtureModel(std::vector<MixtureComponent> c) : components(std::move(c)) {
  if (components.empty()) throw InvalidArgument("mixture needs at least one component");
  double total = 0.0;
  for (const auto& comp : components) {
    if (!(comp.weight >= 0.0)) throw InvalidArgument("mixture weights must be nonnegative");
    if (!(comp.scale > 0.0) || !std::isfinite(comp.scale)) {
      throw InvalidArgument("mixture scales must be positive");
    }
    total += comp.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("mixture weights must sum to 1");
}

double kde_density(const KdeModel& model, const Rotation& query) {
  const Mat3 q = query.matrix();
  const double h = model.bandwidth;
  // Same per-term arithmetic as mm_density with w = 1/N, so the two agree
  // bit-for-bit under uniform weights.
  const double coef = (1.0 / static_cast<double>(model.samples.size())) / (h * h * h);
  double sum = 0.0;
  for (const Rotation& s : model.samples) sum += coef * std::exp(-geodesic_distance(q, s.matrix()) / h);
  return sum;
}

double mm_density(const MixtureModel& model, const Rotation& query) {
  const Mat3 q = query.matrix();
  double sum = 0.0;
  for (const auto& c : model.components) {
    const double h = c.scale;
    sum += c.weight / (h * h * h) * std::exp(-geodesic_distance(q, c.pose.matrix()) / h);
  }
  return sum;
}

double quaternion_angle(const Vec4& a, const Vec4& b) {
  const Vec4 qa = unit_quaternion_or_identity(a);
  const Vec4 qb = unit_quaternion_or_identity(b);
  const double c = qa.dot(qb);
  return 2.0 * std::atan2((qa - c * qb).norm(), std::abs(c));
}

Vec4 quaternion_angle_grad(const Vec4& target, const Vec4& raw) {
  const double n = raw.norm();
  if (n < kMinQuaternionNorm) return Vec4::Zero();
  const Vec4 q = raw / n;
  const Vec4 p = target.normalized();
  const double c = p.dot(q);
  const Vec4 perp = p - c * q;
  const double sn = perp.norm();
  if (sn < 1e-15) return Vec4::Zero();
  const double sign = c >= 0.0 ? 1.0 : -1.0;
  return (-2.0 * sign / (n * sn)) * perp;
}

KdeNll density_nll(const KdeModel& model, const Rotation& gt) {
  const std::size_t n = model.samples.size();
  const double h = model.bandwidth;
  const Mat3 g = gt.matrix();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = geodesic_distance(g, model.samples[i].matrix());

  const double dmin = *std::min_element(d.begin(), d.end());
  std::vector<double> w(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(-(d[i] - dmin) / h);
    sum += w[i];
  }
  const double log_s = -dmin / h + std::log(sum);

  KdeNll out;
  out.loss = std::log(static_cast<double>(n)) + 3.0 * std::log(h) - log_s;
  out.grad_quaternions.resize(n);
  out.grad_distances.resize(n);
  double weighted_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] /= sum;
    weighted_d += w[i] * d[i];
    const double dl_dd = w[i] / h;
    out.grad_distances[i] = dl_dd;
    out.grad_quaternions[i] = dl_dd * quaternion_angle_grad(gt.quaternion(), model.samples[i].quaternion());
  }
  out.grad_bandwidth = 3.0 / h - weighted_d / (h * h);
  return out;
}

MixtureNll density_nll(const MixtureModel& model, const Rotation& gt) {
  const std::size_t n = model.components.size();
  const Mat3 g = gt.matrix();
  std::vector<double> d(n), a(n);
  double amax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = model.components[i];
    d[i] = geodesic_distance(g, c.pose.matrix());
    // log of the component term without its weight
    a[i] = -3.0 * std::log(c.scale) - d[i] / c.scale;
    if (c.weight > 0.0) amax = std::max(amax, std::log(c.weight) + a[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = model.components[i].weight;
    if (w > 0.0) sum += std::exp(std::log(w) + a[i] - amax);
  }
  const double log_p = amax + std::log(sum);

  MixtureNll out;
  out.loss = -log_p;
  out.grad_quaternions.resize(n);
  out.grad_distances.resize(n);
  out.grad_weights.resize(n);
  out.grad_scales.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = model.components[i];
    const double unweighted = std::exp(a[i] - log_p);  // h^-3 e^{-d/h} / p
    const double r = c.weight * unweighted;            // responsibility
    out.grad_weights[i] = -unweighted;
    out.grad_scales[i] = -r * (-3.0 / c.scale + d[i] / (c.scale * c.scale));
    out.grad_distances[i] = r / c.scale;
    out.grad_quaternions[i] =
        (r / c.scale) * quaternion_angle_grad(gt.quaternion(), c.pose.quaternion());
  }
  return out;
}

GridOracle::GridOracle(std::vector<Rotation> n) : nodes(std::move(n)) {
  if (nodes.empty()) throw InvalidArgument("grid oracle needs at least one node");
  node_weight = kSo3Volume / static_cast<double>(nodes.size());
}

GridOracle GridOracle::random(std::size_t n, std::uint64_t seed) {
  return GridOracle(so3_sample_grid(n, seed));
}

double log_partition_brute(const ScoreFn& score, const GridOracle& oracle) {
  std::vector<double> x(oracle.nodes.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = score(oracle.nodes[i]);
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum) + std::log(oracle.node_weight);
}

Eigen::VectorXd log_partition_grad_estimate(const std::vector<Rotation>& samples,
                                            const ScoreGradFn& grad_fn) {
  if (samples.empty()) throw InvalidArgument("gradient estimate needs at least one sample");
  Eigen::VectorXd acc = grad_fn(samples.front());
  for (std::size_t i = 1; i < samples.size(); ++i) acc += grad_fn(samples[i]);
  return acc / static_cast<double>(samples.size());
}

double mle_surrogate_loss(double gt_logit, const std::vector<double>& sample_logits) {
  if (sample_logits.empty()) throw InvalidArgument("surrogate needs at least one sample logit");
  const double mean = std::accumulate(sample_logits.begin(), sample_logits.end(), 0.0) /
                      static_cast<double>(sample_logits.size());
  return -(gt_logit - mean);
}

}  // namespace aden
