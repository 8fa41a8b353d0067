#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aden/density.hpp"
#include "aden/nnet.hpp"
#include "aden/rotmath.hpp"

namespace aden {

enum class TrainingMode { contrastive, kde_nll, mm_nll };
enum class NegativeMode { generated_noisy, generated_clean, random_grid };
/// How noise_variance is read: as sigma^2 (default) or as sigma.
enum class NoiseLaw { variance, stddev };

const char* to_string(TrainingMode m);
const char* to_string(NegativeMode m);
const char* to_string(NoiseLaw m);
TrainingMode training_mode_from_string(const std::string& s);
NegativeMode negative_mode_from_string(const std::string& s);
NoiseLaw noise_law_from_string(const std::string& s);

struct ModelConfig {
  std::size_t num_hypotheses = 500;  // M
  std::size_t query_dim = 256;       // width of queries, contexts and embeddings
  std::size_t hidden_width = 256;
  std::size_t head_layers = 3;       // hidden layers of generator/discriminator heads
  std::size_t embed_layers = 2;      // hidden layers of query/pose/context MLPs
  Activation activation = Activation::relu;

  double noise_variance = 3.0;
  NoiseLaw noise_law = NoiseLaw::variance;
  std::size_t wta_k = 1;
  double lambda_t = 1.0;
  TrainingMode training_mode = TrainingMode::contrastive;
  NegativeMode negative_mode = NegativeMode::generated_noisy;
  std::size_t random_negatives = 500;
  double kde_bandwidth = kDefaultKdeBandwidth;
  double min_scale = 1e-3;  // floor added to softplus mixture scales

  /// Throws ConfigError on invalid ranges.
  void validate() const;
  double noise_stddev() const;
};

/// Per-view fused context vectors; row 0 is the reference view.
struct FusedContext {
  Tensor2 g;
};

/// Raw 7-vectors (quaternion, translation) and the decoded poses.
struct GeneratorOutput {
  Tensor2 raw;  // M x 7
  std::vector<Pose> poses;
};

Pose raw_to_pose(const Eigen::Ref<const Eigen::RowVectorXd>& raw);

/// 12-d discriminator input: row-major rotation matrix then translation.
Tensor2 pose_features(const std::vector<Pose>& poses);

/// Gradient w.r.t. raw generator rows (N x 7) given the gradient w.r.t. their
/// pose features (N x 12).
Tensor2 pose_features_backward(const Tensor2& raw, const Tensor2& d_features);

/// Generator + discriminator heads over a shared context trunk.
///
/// Parameter groups: "ctx" (context MLP), "query" (query embedding MLP),
/// "queries" (M x query_dim learnable queries), "gen" (generator head),
/// "pose" (pose embedding MLP), "disc" (discriminator head) and, in mm_nll
/// mode, "scale" (per-hypothesis mixture scale head).
class AdenModel {
public:
  AdenModel(ModelConfig cfg, std::size_t feature_dim);

  const ModelConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return feature_dim_; }

  const Mlp& context_net() const { return ctx_; }
  const Mlp& query_net() const { return query_; }
  const Mlp& generator_head() const { return gen_; }
  const Mlp& pose_net() const { return pose_; }
  const Mlp& discriminator_head() const { return disc_; }
  const Mlp& scale_head() const { return scale_; }
  bool has_scale_head() const { return cfg_.training_mode == TrainingMode::mm_nll; }

  /// Kaiming init for every MLP, N(0, 1) queries.
  void init(ParamStore& params, Rng& rng) const;

  /// Rows [F_i, F_ref, mean_j F_j, ref_flag_i] for every view.
  Tensor2 context_input(const Eigen::MatrixXd& view_features) const;

  /// Throws ShapeMismatch unless there are >= 2 views of feature_dim columns.
  FusedContext fuse_context(const ParamStore& params, const Eigen::MatrixXd& view_features) const;

  /// Hypotheses for one view from the first `count` learnable queries
  /// (all of them when count is 0).
  GeneratorOutput generate_hypotheses(const ParamStore& params, const FusedContext& ctx,
                                      std::size_t view, std::size_t count = 0) const;

  /// Hypotheses from explicit query vectors (rows of `queries`).
  GeneratorOutput generate_from_queries(const ParamStore& params, const FusedContext& ctx,
                                        std::size_t view, const Tensor2& queries) const;

  /// Discriminator logits for `poses`; gt_logit is filled iff `gt` is given.
  ScoreSet score_hypotheses(const ParamStore& params, const FusedContext& ctx, std::size_t view,
                            const std::vector<Pose>& poses,
                            const std::optional<Pose>& gt = std::nullopt) const;

  /// Mixture scales (softplus + floor) for the first `count` hypotheses.
  /// Only meaningful in mm_nll mode.
  std::vector<double> hypothesis_scales(const ParamStore& params, const FusedContext& ctx,
                                        std::size_t view, std::size_t count = 0) const;

private:
  ModelConfig cfg_;
  std::size_t feature_dim_;
  Mlp ctx_, query_, gen_, pose_, disc_, scale_;
};

inline constexpr const char* kQueriesParam = "queries";

}  // namespace aden
