#include "aden/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "aden/errors.hpp"

namespace aden {

const char* to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::discriminator: return "disc";
    case InferenceMethod::kde: return "kde";
    case InferenceMethod::mm: return "mm";
  }
  return "?";
}

InferenceMethod inference_method_from_string(const std::string& s) {
  if (s == "disc" || s == "discriminator") return InferenceMethod::discriminator;
  if (s == "kde") return InferenceMethod::kde;
  if (s == "mm") return InferenceMethod::mm;
  throw InvalidArgument("unknown inference method '" + s + "'");
}

std::vector<double> pairwise_rotation_errors(const SceneSet& pred, const SceneSet& gt) {
  if (pred.poses.size() != gt.poses.size()) throw LengthMismatch("prediction and ground truth sizes differ");
  if (gt.poses.size() < 2) throw LengthMismatch("need at least 2 poses");
  std::vector<double> out;
  const std::size_t n = gt.poses.size();
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Rotation rp = relative_pose(pred.poses[i], pred.poses[j]).rotation;
      const Rotation rg = relative_pose(gt.poses[i], gt.poses[j]).rotation;
      out.push_back(rad_to_deg(geodesic_distance(rp, rg)));
    }
  }
  return out;
}

namespace {

std::map<double, double> fraction_below(const std::vector<double>& values,
                                        const std::vector<double>& thresholds) {
  std::map<double, double> out;
  for (double t : thresholds) {
    if (values.empty()) {
      out[t] = 0.0;
      continue;
    }
    const auto hits = std::count_if(values.begin(), values.end(), [t](double v) { return v < t; });
    out[t] = static_cast<double>(hits) / static_cast<double>(values.size());
  }
  return out;
}

ClosestErrorStats summarize(std::vector<double> v) {
  ClosestErrorStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.max = *std::max_element(v.begin(), v.end());
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

Points3 centers(const SceneSet& s) {
  Points3 p(static_cast<Eigen::Index>(s.poses.size()), 3);
  for (std::size_t i = 0; i < s.poses.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = camera_center(s.poses[i]).transpose();
  }
  return p;
}

}  // namespace

MetricReport rotation_accuracy(const SceneSet& pred, const SceneSet& gt,
                               const std::vector<double>& thresholds_deg) {
  const std::vector<double> err = pairwise_rotation_errors(pred, gt);
  MetricReport r;
  r.n_pairs = err.size();
  r.acc_at = fraction_below(err, thresholds_deg);
  return r;
}

Similarity umeyama_align(const Points3& src, const Points3& dst) {
  if (src.rows() != dst.rows()) throw LengthMismatch("point sets differ in size");
  if (src.rows() < 3) throw DegenerateConfiguration("alignment needs at least 3 points");
  const double n = static_cast<double>(src.rows());
  const Eigen::RowVector3d mx = src.colwise().mean();
  const Eigen::RowVector3d my = dst.colwise().mean();
  const Points3 xc = src.rowwise() - mx;
  const Points3 yc = dst.rowwise() - my;

  const Eigen::JacobiSVD<Eigen::MatrixXd> spread(xc);
  const auto sv = spread.singularValues();
  if (!(sv[0] > 1e-12) || sv[1] < 1e-9 * sv[0]) {
    throw DegenerateConfiguration("source points are collinear or coincident");
  }

  const Mat3 cov = yc.transpose() * xc / n;
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  const double var_x = xc.squaredNorm() / n;
  out.scale = (svd.singularValues().asDiagonal() * s).trace() / var_x;
  out.translation = my.transpose() - out.scale * out.rotation * mx.transpose();
  return out;
}

double alignment_residual(const Similarity& sim, const Points3& src, const Points3& dst) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    r += (sim.apply(src.row(i).transpose()) - dst.row(i).transpose()).squaredNorm();
  }
  return r;
}

std::vector<double> translation_errors(const SceneSet& pred, const SceneSet& gt) {
  if (pred.poses.size() != gt.poses.size()) throw LengthMismatch("prediction and ground truth sizes differ");
  const Points3 pc = centers(pred);
  const Points3 gc = centers(gt);
  const Similarity sim = umeyama_align(pc, gc);
  const Eigen::RowVector3d centroid = gc.colwise().mean();
  const double scale = (gc.rowwise() - centroid).rowwise().norm().maxCoeff();
  std::vector<double> out;
  for (Eigen::Index i = 0; i < pc.rows(); ++i) {
    out.push_back((sim.apply(pc.row(i).transpose()) - gc.row(i).transpose()).norm() / scale);
  }
  return out;
}

MetricReport translation_accuracy(const SceneSet& pred, const SceneSet& gt,
                                  const std::vector<double>& fractions) {
  const std::vector<double> err = translation_errors(pred, gt);
  MetricReport r;
  r.n_cameras = err.size();
  r.translation_acc = fraction_below(err, fractions);
  return r;
}

double closest_hypothesis_error(const std::vector<Pose>& hypotheses, const Pose& gt) {
  if (hypotheses.empty()) throw InvalidArgument("no hypotheses");
  const Mat3 g = gt.rotation.matrix();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : hypotheses) best = std::min(best, geodesic_distance(g, h.rotation.matrix()));
  return rad_to_deg(best);
}

std::vector<double> mode_coverage(const std::vector<Pose>& hypotheses,
                                  const std::vector<Pose>& modes, double threshold_deg) {
  std::vector<double> out;
  const double thr = deg_to_rad(threshold_deg);
  for (const auto& m : modes) {
    const Mat3 mm = m.rotation.matrix();
    std::size_t hits = 0;
    for (const auto& h : hypotheses) {
      if (geodesic_distance(mm, h.rotation.matrix()) < thr) ++hits;
    }
    out.push_back(hypotheses.empty() ? 0.0
                                     : static_cast<double>(hits) / static_cast<double>(hypotheses.size()));
  }
  return out;
}

std::size_t select_mode_index(const std::vector<Pose>& hypotheses,
                              const std::vector<double>& logits, InferenceMethod method,
                              double bandwidth, const std::vector<double>& scales) {
  if (hypotheses.empty()) throw InvalidArgument("no hypotheses to select from");
  std::vector<double> score(hypotheses.size());
  switch (method) {
    case InferenceMethod::discriminator: {
      if (logits.size() != hypotheses.size()) throw LengthMismatch("one logit per hypothesis required");
      score = logits;
      break;
    }
    case InferenceMethod::kde: {
      std::vector<Rotation> rots;
      rots.reserve(hypotheses.size());
      for (const auto& h : hypotheses) rots.push_back(h.rotation);
      const KdeModel kde(std::move(rots), bandwidth);
      for (std::size_t i = 0; i < hypotheses.size(); ++i) score[i] = kde_density(kde, hypotheses[i].rotation);
      break;
    }
    case InferenceMethod::mm: {
      if (logits.size() != hypotheses.size()) throw LengthMismatch("one logit per hypothesis required");
      if (!scales.empty() && scales.size() != hypotheses.size()) {
        throw LengthMismatch("one scale per hypothesis required");
      }
      const std::vector<double> w = contrastive_probs(ScoreSet{logits, std::nullopt});
      std::vector<MixtureComponent> comps;
      comps.reserve(hypotheses.size());
      for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        comps.push_back({hypotheses[i].rotation, w[i], scales.empty() ? bandwidth : scales[i]});
      }
      // Softmax weights can miss 1 by a few ulps; renormalize before the
      // simplex check.
      double total = 0.0;
      for (const auto& c : comps) total += c.weight;
      for (auto& c : comps) c.weight /= total;
      const MixtureModel mm(std::move(comps));
      for (std::size_t i = 0; i < hypotheses.size(); ++i) score[i] = mm_density(mm, hypotheses[i].rotation);
      break;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < score.size(); ++i) {
    if (score[i] > score[best]) best = i;
  }
  return best;
}

Pose select_mode(const std::vector<Pose>& hypotheses, const std::vector<double>& logits,
                 InferenceMethod method, double bandwidth, const std::vector<double>& scales) {
  return hypotheses[select_mode_index(hypotheses, logits, method, bandwidth, scales)];
}

void MetricAccumulator::add_scene(const SceneSet& pred, const SceneSet& gt) {
  const auto r = pairwise_rotation_errors(pred, gt);
  rot_errors_.insert(rot_errors_.end(), r.begin(), r.end());
  if (gt.poses.size() >= 3) {
    try {
      const auto t = translation_errors(pred, gt);
      trans_errors_.insert(trans_errors_.end(), t.begin(), t.end());
    } catch (const DegenerateConfiguration&) {
      // Unalignable predictions count as misses for every camera.
      trans_errors_.insert(trans_errors_.end(), gt.poses.size(),
                           std::numeric_limits<double>::infinity());
    }
  }
}

MetricReport MetricAccumulator::report(const std::vector<double>& thresholds_deg,
                                       const std::vector<double>& fractions) const {
  MetricReport r;
  r.acc_at = fraction_below(rot_errors_, thresholds_deg);
  r.translation_acc = fraction_below(trans_errors_, fractions);
  r.closest_err_deg = summarize(closest_);
  r.n_pairs = rot_errors_.size();
  r.n_cameras = trans_errors_.size();
  return r;
}

void EvalConfig::validate() const {
  if (thresholds_deg.empty()) throw ConfigError("eval thresholds must be non-empty");
  if (views < 2 || scene_views < views) throw ConfigError("need 2 <= views <= scene_views");
  if (resamplings < 1) throw ConfigError("resamplings must be >= 1");
  if (!(kde_bandwidth > 0.0)) throw ConfigError("kde_bandwidth must be > 0");
}

std::vector<ViewHypotheses> predict_episode(const AdenModel& model, const ParamStore& params,
                                            const Episode& episode, std::size_t count) {
  const FusedContext ctx = model.fuse_context(params, episode.view_features);
  std::vector<ViewHypotheses> out(episode.num_views());
  for (std::size_t v = 1; v < episode.num_views(); ++v) {
    GeneratorOutput gen = model.generate_hypotheses(params, ctx, v, count);
    out[v].logits = model.score_hypotheses(params, ctx, v, gen.poses).sample_logits;
    if (model.has_scale_head()) out[v].scales = model.hypothesis_scales(params, ctx, v, count);
    out[v].poses = std::move(gen.poses);
  }
  return out;
}

SceneSet assemble_prediction(const Episode& episode, const std::vector<ViewHypotheses>& hyps,
                             InferenceMethod method, double bandwidth) {
  SceneSet pred;
  pred.poses.push_back(episode.gt.poses.front());
  for (std::size_t v = 1; v < episode.num_views(); ++v) {
    pred.poses.push_back(select_mode(hyps[v].poses, hyps[v].logits, method, bandwidth, hyps[v].scales));
  }
  return pred;
}

std::vector<Episode> heldout_episodes(const EpisodeSampler& sampler, const EvalConfig& cfg) {
  cfg.validate();
  const std::vector<int>& orders =
      cfg.symmetry_orders.empty() ? sampler.config().symmetry_orders : cfg.symmetry_orders;
  Rng rng(cfg.seed);
  std::vector<Episode> out;
  out.reserve(cfg.scenes * cfg.resamplings);
  for (std::size_t s = 0; s < cfg.scenes; ++s) {
    const int order = orders[s % orders.size()];
    const WorldScene scene = sampler.sample_scene(rng, cfg.scene_views, order);
    std::vector<std::size_t> idx(cfg.scene_views);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t r = 0; r < cfg.resamplings; ++r) {
      std::shuffle(idx.begin(), idx.end(), rng);
      out.push_back(episode_from_views(scene, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cfg.views)}));
    }
  }
  return out;
}

namespace {
std::atomic<std::size_t> g_eval_threads{1};
}  // namespace

void set_eval_threads(std::size_t n) { g_eval_threads = std::max<std::size_t>(n, 1); }
std::size_t eval_threads() { return g_eval_threads; }

EvaluationResult evaluate_model(const AdenModel& model, const ParamStore& params,
                                const std::vector<Episode>& episodes, const EvalConfig& cfg) {
  std::vector<std::vector<ViewHypotheses>> all(episodes.size());
  const std::size_t n_threads = std::min(eval_threads(), episodes.size());
  if (n_threads <= 1) {
    for (std::size_t e = 0; e < episodes.size(); ++e) all[e] = predict_episode(model, params, episodes[e], cfg.hypotheses);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t e = next++; e < episodes.size(); e = next++) {
          try {
            all[e] = predict_episode(model, params, episodes[e], cfg.hypotheses);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  MetricAccumulator acc;
  std::vector<double> cov_sum;
  std::vector<std::size_t> cov_n;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    const auto& hyps = all[e];
    acc.add_scene(assemble_prediction(ep, hyps, cfg.method, cfg.kde_bandwidth), ep.gt);
    for (std::size_t v = 1; v < ep.num_views(); ++v) {
      acc.add_closest_error(closest_hypothesis_error(hyps[v].poses, ep.gt.poses[v]));
      const auto cov = mode_coverage(hyps[v].poses, ep.modes[v], 15.0);
      if (cov.size() > cov_sum.size()) {
        cov_sum.resize(cov.size(), 0.0);
        cov_n.resize(cov.size(), 0);
      }
      for (std::size_t k = 0; k < cov.size(); ++k) {
        cov_sum[k] += cov[k];
        ++cov_n[k];
      }
    }
  }
  EvaluationResult res;
  res.report = acc.report(cfg.thresholds_deg, cfg.translation_fractions);
  for (std::size_t k = 0; k < cov_sum.size(); ++k) res.mode_coverage.push_back(cov_sum[k] / static_cast<double>(cov_n[k]));
  return res;
}

std::vector<CurveRow> sample_efficiency_curve(const AdenModel& model, const ParamStore& params,
                                              const std::vector<Episode>& episodes,
                                              const std::vector<std::size_t>& hypothesis_counts,
                                              const std::vector<std::size_t>& grid_sizes,
                                              const EvalConfig& cfg) {
  std::vector<CurveRow> rows;
  for (std::size_t m : hypothesis_counts) {
    EvalConfig c = cfg;
    c.hypotheses = m;
    c.method = InferenceMethod::discriminator;
    const EvaluationResult r = evaluate_model(model, params, episodes, c);
    rows.push_back({"generated", m, r.report.acc_at, r.report.closest_err_deg.mean});
  }
  for (std::size_t g : grid_sizes) {
    const std::vector<Rotation> grid = so3_sample_grid(g, cfg.seed ^ (0x9e3779b97f4a7c15ULL + g));
    MetricAccumulator acc;
    for (const Episode& ep : episodes) {
      const FusedContext ctx = model.fuse_context(params, ep.view_features);
      SceneSet pred;
      pred.poses.push_back(ep.gt.poses.front());
      for (std::size_t v = 1; v < ep.num_views(); ++v) {
        const GeneratorOutput gen = model.generate_hypotheses(params, ctx, v, cfg.hypotheses);
        const ScoreSet gs = model.score_hypotheses(params, ctx, v, gen.poses);
        const Vec3 t = gen.poses[select_mode_index(gen.poses, gs.sample_logits,
                                                   InferenceMethod::discriminator)].translation;
        std::vector<Pose> cand;
        cand.reserve(grid.size());
        for (const auto& r : grid) cand.push_back({r, t});
        const ScoreSet s = model.score_hypotheses(params, ctx, v, cand);
        pred.poses.push_back(cand[select_mode_index(cand, s.sample_logits, InferenceMethod::discriminator)]);
        acc.add_closest_error(closest_hypothesis_error(cand, ep.gt.poses[v]));
      }
      acc.add_scene(pred, ep.gt);
    }
    const MetricReport r = acc.report(cfg.thresholds_deg, cfg.translation_fractions);
    rows.push_back({"grid", g, r.acc_at, r.closest_err_deg.mean});
  }
  return rows;
}

}  // namespace aden
