#include "aden/model.hpp"

#include <cmath>

#include "aden/errors.hpp"

namespace aden {

const char* to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::contrastive: return "contrastive";
    case TrainingMode::kde_nll: return "kde_nll";
    case TrainingMode::mm_nll: return "mm_nll";
  }
  return "?";
}

const char* to_string(NegativeMode m) {
  switch (m) {
    case NegativeMode::generated_noisy: return "generated_noisy";
    case NegativeMode::generated_clean: return "generated_clean";
    case NegativeMode::random_grid: return "random_grid";
  }
  return "?";
}

const char* to_string(NoiseLaw m) { return m == NoiseLaw::variance ? "variance" : "stddev"; }

TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "contrastive") return TrainingMode::contrastive;
  if (s == "kde_nll") return TrainingMode::kde_nll;
  if (s == "mm_nll") return TrainingMode::mm_nll;
  throw ConfigError("unknown training_mode '" + s + "'");
}

NegativeMode negative_mode_from_string(const std::string& s) {
  if (s == "generated_noisy") return NegativeMode::generated_noisy;
  if (s == "generated_clean") return NegativeMode::generated_clean;
  if (s == "random_grid") return NegativeMode::random_grid;
  throw ConfigError("unknown negative_mode '" + s + "'");
}

NoiseLaw noise_law_from_string(const std::string& s) {
  if (s == "variance") return NoiseLaw::variance;
  if (s == "stddev") return NoiseLaw::stddev;
  throw ConfigError("unknown noise_law '" + s + "'");
}

void ModelConfig::validate() const {
  if (num_hypotheses < 1) throw ConfigError("num_hypotheses must be >= 1");
  if (wta_k < 1 || wta_k > num_hypotheses) throw ConfigError("wta_k must lie in [1, num_hypotheses]");
  if (query_dim < 1 || hidden_width < 1) throw ConfigError("network widths must be >= 1");
  if (!(noise_variance >= 0.0)) throw ConfigError("noise_variance must be >= 0");
  if (!(lambda_t >= 0.0)) throw ConfigError("lambda_t must be >= 0");
  if (negative_mode == NegativeMode::random_grid && random_negatives < 1) {
    throw ConfigError("random_negatives must be >= 1");
  }
  if (!(kde_bandwidth > 0.0)) throw ConfigError("kde_bandwidth must be > 0");
  if (!(min_scale > 0.0)) throw ConfigError("min_scale must be > 0");
}

double ModelConfig::noise_stddev() const {
  return noise_law == NoiseLaw::variance ? std::sqrt(noise_variance) : noise_variance;
}

Pose raw_to_pose(const Eigen::Ref<const Eigen::RowVectorXd>& raw) {
  // A dead generator can emit an all-zero quaternion; read it as the identity.
  const Vec4 q = unit_quaternion_or_identity(Vec4(raw[0], raw[1], raw[2], raw[3]));
  return {Rotation::from_quaternion(q), Vec3(raw[4], raw[5], raw[6])};
}

Tensor2 pose_features(const std::vector<Pose>& poses) {
  Tensor2 out(static_cast<Eigen::Index>(poses.size()), 12);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Mat3 r = poses[i].rotation.matrix();
    const auto row = static_cast<Eigen::Index>(i);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) out(row, 3 * a + b) = r(a, b);
    }
    for (int a = 0; a < 3; ++a) out(row, 9 + a) = poses[i].translation[a];
  }
  return out;
}

Tensor2 pose_features_backward(const Tensor2& raw, const Tensor2& d_features) {
  if (raw.cols() != 7 || d_features.cols() != 12 || raw.rows() != d_features.rows()) {
    throw ShapeMismatch("pose_features_backward expects N x 7 raw and N x 12 upstream");
  }
  Tensor2 out(raw.rows(), 7);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const Vec4 u = raw.row(i).segment<4>(0).transpose();
    const double n = u.norm();
    out.row(i).segment<3>(4) = d_features.row(i).segment<3>(9);
    if (n < kMinQuaternionNorm) {
      out.row(i).segment<4>(0).setZero();
      continue;
    }
    const Vec4 q = u / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    auto g = [&](int a, int b) { return d_features(i, 3 * a + b); };
    // Derivative of the unit-quaternion rotation formula, then of the normalization.
    Vec4 dq;
    dq[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dq[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                   w * g(2, 1) - 2.0 * x * g(2, 2));
    dq[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                   z * g(2, 1) - 2.0 * y * g(2, 2));
    dq[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                   y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    const Vec4 du = (dq - q * q.dot(dq)) / n;
    out.row(i).segment<4>(0) = du.transpose();
  }
  return out;
}

AdenModel::AdenModel(ModelConfig cfg, std::size_t feature_dim)
    : cfg_(std::move(cfg)), feature_dim_(feature_dim) {
  cfg_.validate();
  if (feature_dim_ < 1) throw ConfigError("feature_dim must be >= 1");
  const std::size_t d = cfg_.query_dim;
  const std::size_t w = cfg_.hidden_width;
  const Activation a = cfg_.activation;
  ctx_ = Mlp("ctx", MlpSpec::make(3 * feature_dim_ + 1, w, cfg_.embed_layers, d, a));
  query_ = Mlp("query", MlpSpec::make(d, w, cfg_.embed_layers, d, a));
  gen_ = Mlp("gen", MlpSpec::make(d, w, cfg_.head_layers, 7, a));
  pose_ = Mlp("pose", MlpSpec::make(12, w, cfg_.embed_layers, d, a));
  disc_ = Mlp("disc", MlpSpec::make(d, w, cfg_.head_layers, 1, a));
  scale_ = Mlp("scale", MlpSpec::make(d, w, cfg_.head_layers, 1, a));
}

void AdenModel::init(ParamStore& params, Rng& rng) const {
  ctx_.init(params, rng);
  query_.init(params, rng);
  gen_.init(params, rng);
  pose_.init(params, rng);
  disc_.init(params, rng);
  if (has_scale_head()) scale_.init(params, rng);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor2 q(cfg_.num_hypotheses, cfg_.query_dim);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = n01(rng);
  params.add(kQueriesParam, std::move(q));
}

Tensor2 AdenModel::context_input(const Eigen::MatrixXd& f) const {
  if (f.rows() < 2) throw ShapeMismatch("context fusion needs at least 2 views");
  if (static_cast<std::size_t>(f.cols()) != feature_dim_) {
    throw ShapeMismatch("expected " + std::to_string(feature_dim_) + " feature columns, got " +
                        std::to_string(f.cols()));
  }
  const Eigen::Index n = f.rows();
  const Eigen::Index fd = f.cols();
  const Eigen::RowVectorXd mean = f.colwise().mean();
  Tensor2 in(n, 3 * fd + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    in.row(i).segment(0, fd) = f.row(i);
    in.row(i).segment(fd, fd) = f.row(0);
    in.row(i).segment(2 * fd, fd) = mean;
    in(i, 3 * fd) = i == 0 ? 1.0 : 0.0;
  }
  return in;
}

FusedContext AdenModel::fuse_context(const ParamStore& params,
                                     const Eigen::MatrixXd& view_features) const {
  return {ctx_.forward(params, context_input(view_features))};
}

GeneratorOutput AdenModel::generate_from_queries(const ParamStore& params, const FusedContext& ctx,
                                                 std::size_t view, const Tensor2& queries) const {
  Tensor2 h = query_.forward(params, queries);
  h.rowwise() += ctx.g.row(static_cast<Eigen::Index>(view));
  GeneratorOutput out;
  out.raw = gen_.forward(params, h);
  out.poses.reserve(static_cast<std::size_t>(out.raw.rows()));
  for (Eigen::Index m = 0; m < out.raw.rows(); ++m) out.poses.push_back(raw_to_pose(out.raw.row(m)));
  return out;
}

GeneratorOutput AdenModel::generate_hypotheses(const ParamStore& params, const FusedContext& ctx,
                                               std::size_t view, std::size_t count) const {
  const Tensor2& q = params.get(kQueriesParam);
  const auto m = static_cast<Eigen::Index>(count == 0 ? q.rows() : std::min<Eigen::Index>(count, q.rows()));
  return generate_from_queries(params, ctx, view, q.topRows(m));
}

ScoreSet AdenModel::score_hypotheses(const ParamStore& params, const FusedContext& ctx,
                                     std::size_t view, const std::vector<Pose>& poses,
                                     const std::optional<Pose>& gt) const {
  std::vector<Pose> all = poses;
  if (gt) all.push_back(*gt);
  Tensor2 h = pose_.forward(params, pose_features(all));
  h.rowwise() += ctx.g.row(static_cast<Eigen::Index>(view));
  const Tensor2 x = disc_.forward(params, h);
  ScoreSet s;
  s.sample_logits.resize(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) s.sample_logits[i] = x(static_cast<Eigen::Index>(i), 0);
  if (gt) s.gt_logit = x(x.rows() - 1, 0);
  return s;
}

std::vector<double> AdenModel::hypothesis_scales(const ParamStore& params, const FusedContext& ctx,
                                                 std::size_t view, std::size_t count) const {
  const Tensor2& q = params.get(kQueriesParam);
  const auto m = static_cast<Eigen::Index>(count == 0 ? q.rows() : std::min<Eigen::Index>(count, q.rows()));
  Tensor2 h = query_.forward(params, q.topRows(m));
  h.rowwise() += ctx.g.row(static_cast<Eigen::Index>(view));
  const Tensor2 z = scale_.forward(params, h);
  std::vector<double> out(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double v = z(i, 0);
    const double softplus = v > 30.0 ? v : std::log1p(std::exp(v));
    out[static_cast<std::size_t>(i)] = softplus + cfg_.min_scale;
  }
  return out;
}

}  // namespace aden
