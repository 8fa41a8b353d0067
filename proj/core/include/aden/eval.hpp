#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aden/model.hpp"
#include "aden/nnet.hpp"
#include "aden/rotmath.hpp"
#include "aden/synthdata.hpp"

namespace aden {

enum class InferenceMethod { discriminator, kde, mm };

const char* to_string(InferenceMethod m);
/// Accepts "disc"/"discriminator", "kde" and "mm".
InferenceMethod inference_method_from_string(const std::string& s);

struct ClosestErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  std::map<double, double> acc_at;           // threshold (deg) -> fraction
  std::map<double, double> translation_acc;  // fraction of scene scale -> fraction
  ClosestErrorStats closest_err_deg;
  std::size_t n_pairs = 0;
  std::size_t n_cameras = 0;  // cameras contributing to translation accuracy
};

/// Relative-rotation error (deg) of every unordered pair i < j.
/// Throws LengthMismatch unless both scenes have the same size >= 2.
std::vector<double> pairwise_rotation_errors(const SceneSet& pred, const SceneSet& gt);

MetricReport rotation_accuracy(const SceneSet& pred, const SceneSet& gt,
                               const std::vector<double>& thresholds_deg);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Least-squares s, R, t minimizing sum |s R x_i + t - y_i|^2. Throws
/// DegenerateConfiguration for fewer than 3 points or collinear sources.
Similarity umeyama_align(const Points3& src, const Points3& dst);

/// Sum of squared residuals of `sim` mapping src onto dst.
double alignment_residual(const Similarity& sim, const Points3& src, const Points3& dst);

/// Per-camera center error after alignment, divided by the scene scale
/// (distance from the gt camera centroid to the furthest gt camera).
std::vector<double> translation_errors(const SceneSet& pred, const SceneSet& gt);

MetricReport translation_accuracy(const SceneSet& pred, const SceneSet& gt,
                                  const std::vector<double>& fractions);

/// Minimum rotation error (deg) over the hypotheses.
double closest_hypothesis_error(const std::vector<Pose>& hypotheses, const Pose& gt);

/// Fraction of hypotheses within `threshold_deg` of each mode.
std::vector<double> mode_coverage(const std::vector<Pose>& hypotheses,
                                  const std::vector<Pose>& modes, double threshold_deg);

/// Index of the selected hypothesis; ties resolve to the lowest index.
/// kde evaluates the leave-self-in density over the set; mm uses softmax of
/// `logits` as weights and `scales` (or `bandwidth` when empty) as h_n.
std::size_t select_mode_index(const std::vector<Pose>& hypotheses,
                              const std::vector<double>& logits, InferenceMethod method,
                              double bandwidth = kDefaultKdeBandwidth,
                              const std::vector<double>& scales = {});

Pose select_mode(const std::vector<Pose>& hypotheses, const std::vector<double>& logits,
                 InferenceMethod method, double bandwidth = kDefaultKdeBandwidth,
                 const std::vector<double>& scales = {});

/// Aggregates per-scene metrics with a fixed reduction order.
class MetricAccumulator {
public:
  void add_scene(const SceneSet& pred, const SceneSet& gt);
  void add_closest_error(double deg) { closest_.push_back(deg); }
  MetricReport report(const std::vector<double>& thresholds_deg,
                      const std::vector<double>& fractions) const;

private:
  std::vector<double> rot_errors_;
  std::vector<double> trans_errors_;
  std::vector<double> closest_;
};

struct EvalConfig {
  std::vector<double> thresholds_deg{5.0, 10.0, 15.0};
  std::vector<double> translation_fractions{0.1, 0.2};
  std::size_t scenes = 20;        // held-out scenes
  std::size_t scene_views = 10;   // cameras generated per scene
  std::size_t views = 5;          // views drawn per resampling
  std::size_t resamplings = 5;
  std::vector<int> symmetry_orders;  // empty: use the data mix
  InferenceMethod method = InferenceMethod::discriminator;
  double kde_bandwidth = kDefaultKdeBandwidth;
  std::size_t hypotheses = 0;  // 0: every learnable query
  std::uint64_t seed = 20240917;

  void validate() const;
};

/// Hypotheses, logits and (mm_nll models) scales for one non-reference view.
struct ViewHypotheses {
  std::vector<Pose> poses;
  std::vector<double> logits;
  std::vector<double> scales;
};

/// Generator and discriminator outputs for every view of an episode; entry 0
/// (the reference view) is left empty.
std::vector<ViewHypotheses> predict_episode(const AdenModel& model, const ParamStore& params,
                                            const Episode& episode, std::size_t count = 0);

/// Canonical-frame prediction: the reference pose plus the selected
/// hypothesis of every other view.
SceneSet assemble_prediction(const Episode& episode, const std::vector<ViewHypotheses>& hyps,
                             InferenceMethod method, double bandwidth);

/// Held-out episodes for an evaluation run, in a fixed order.
std::vector<Episode> heldout_episodes(const EpisodeSampler& sampler, const EvalConfig& cfg);

struct EvaluationResult {
  MetricReport report;
  /// Mean over views of each mode's hypothesis coverage at 15 degrees,
  /// mode 0 being the ground truth; one entry per mode of the largest group.
  std::vector<double> mode_coverage;
};

/// Worker threads used by evaluate_model (default 1). Per-episode results
/// are reduced in episode order, so the thread count never changes output.
void set_eval_threads(std::size_t n);
std::size_t eval_threads();

EvaluationResult evaluate_model(const AdenModel& model, const ParamStore& params,
                                const std::vector<Episode>& episodes, const EvalConfig& cfg);

struct CurveRow {
  std::string source;  // "generated" or "grid"
  std::size_t count = 0;
  std::map<double, double> acc_at;
  double closest_err_mean_deg = 0.0;
};

/// Accuracy and closest-hypothesis error for the first M generated
/// hypotheses and for discriminator selection over Haar grids. Grid poses
/// take the translation of the discriminator-selected generated hypothesis.
std::vector<CurveRow> sample_efficiency_curve(const AdenModel& model, const ParamStore& params,
                                              const std::vector<Episode>& episodes,
                                              const std::vector<std::size_t>& hypothesis_counts,
                                              const std::vector<std::size_t>& grid_sizes,
                                              const EvalConfig& cfg);

}  // namespace aden
