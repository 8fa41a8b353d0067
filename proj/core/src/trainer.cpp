#include "aden/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "aden/errors.hpp"

namespace aden {
namespace {

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void add_grad(Gradients& grads, const std::string& name, const Tensor2& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
  } else {
    it->second += g;
  }
}

bool grads_finite(const Gradients& g) {
  return std::all_of(g.begin(), g.end(), [](const auto& kv) { return kv.second.allFinite(); });
}

}  // namespace

std::vector<std::size_t> wta_select(const std::vector<Pose>& hypotheses, const Pose& gt,
                                    std::size_t k, double lambda_t) {
  if (k < 1 || k > hypotheses.size()) throw InvalidArgument("wta k must lie in [1, M]");
  std::vector<double> d(hypotheses.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = pose_distance(hypotheses[i], gt, lambda_t);
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
  idx.resize(k);
  return idx;
}

GeneratorLoss generator_loss(const Tensor2& raw, const Pose& gt, std::size_t k, double lambda_t) {
  if (raw.cols() != 7) throw ShapeMismatch("generator output must have 7 columns");
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index m = 0; m < raw.rows(); ++m) poses.push_back(raw_to_pose(raw.row(m)));

  GeneratorLoss out;
  out.selected = wta_select(poses, gt, k, lambda_t);
  out.grad_raw = Tensor2::Zero(raw.rows(), 7);
  const double inv_k = 1.0 / static_cast<double>(k);
  const Vec4& gq = gt.rotation.quaternion();
  for (std::size_t idx : out.selected) {
    const auto m = static_cast<Eigen::Index>(idx);
    const Vec4 q = raw.row(m).segment<4>(0).transpose();
    const Vec3 dt = raw.row(m).segment<3>(4).transpose() - gt.translation;
    const double e = dt.norm();
    out.loss += inv_k * (quaternion_angle(gq, q) + e);
    out.grad_raw.row(m).segment<4>(0) = inv_k * quaternion_angle_grad(gq, q).transpose();
    if (e > 0.0) out.grad_raw.row(m).segment<3>(4) = (inv_k / e) * dt.transpose();
  }
  return out;
}

std::vector<Pose> make_negatives(const AdenModel& model, const ParamStore& params,
                                 const FusedContext& ctx, std::size_t view,
                                 const std::vector<Pose>& clean, const EpisodeSampler& sampler,
                                 Rng& rng) {
  const ModelConfig& cfg = model.config();
  switch (cfg.negative_mode) {
    case NegativeMode::generated_clean:
      return clean;
    case NegativeMode::generated_noisy: {
      const Tensor2& q = params.get(kQueriesParam);
      const double sigma = cfg.noise_stddev();
      std::normal_distribution<double> n01(0.0, 1.0);
      Tensor2 noisy = q;
      for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += sigma * n01(rng);
      return model.generate_from_queries(params, ctx, view, noisy).poses;
    }
    case NegativeMode::random_grid: {
      std::vector<Pose> out;
      out.reserve(cfg.random_negatives);
      for (std::size_t i = 0; i < cfg.random_negatives; ++i) {
        const Rotation r = random_rotation(rng);
        out.push_back({r, sampler.sample_translation(rng)});
      }
      return out;
    }
  }
  return clean;
}

LossBreakdown batch_loss(const AdenModel& model, const ParamStore& params,
                         const std::vector<Episode>& batch, const EpisodeSampler& sampler,
                         std::uint64_t noise_seed, Gradients* grads) {
  const ModelConfig& cfg = model.config();
  const auto m_count = static_cast<Eigen::Index>(cfg.num_hypotheses);
  const auto dim = static_cast<Eigen::Index>(cfg.query_dim);

  // Non-reference views of every episode, stacked.
  struct ViewRef {
    const Episode* ep;
    std::size_t view;
  };
  std::vector<ViewRef> views;
  for (const Episode& ep : batch) {
    for (std::size_t v = 1; v < ep.num_views(); ++v) views.push_back({&ep, v});
  }
  LossBreakdown out;
  if (views.empty()) return out;
  const auto n_views = static_cast<Eigen::Index>(views.size());
  const double inv_v = 1.0 / static_cast<double>(views.size());

  Tensor2 ctx_in(n_views, static_cast<Eigen::Index>(3 * model.feature_dim() + 1));
  {
    Eigen::Index row = 0;
    for (const Episode& ep : batch) {
      if (ep.num_views() < 2) continue;
      const Tensor2 ci = model.context_input(ep.view_features);
      for (Eigen::Index v = 1; v < ci.rows(); ++v) ctx_in.row(row++) = ci.row(v);
    }
  }
  MlpTape ctx_tape, query_tape, gen_tape;
  const bool want = grads != nullptr;
  const FusedContext ctx{model.context_net().forward(params, ctx_in, want ? &ctx_tape : nullptr)};
  const Tensor2& queries = params.get(kQueriesParam);
  const Tensor2 qe = model.query_net().forward(params, queries, want ? &query_tape : nullptr);

  Tensor2 h_gen(n_views * m_count, dim);
  for (Eigen::Index v = 0; v < n_views; ++v) {
    h_gen.middleRows(v * m_count, m_count) = qe.rowwise() + ctx.g.row(v);
  }
  const Tensor2 raw = model.generator_head().forward(params, h_gen, want ? &gen_tape : nullptr);

  Tensor2 d_raw = Tensor2::Zero(raw.rows(), 7);
  Tensor2 d_ctx = Tensor2::Zero(n_views, dim);

  std::vector<std::vector<Pose>> hyps(views.size());
  for (Eigen::Index v = 0; v < n_views; ++v) {
    const Pose& gt = views[static_cast<std::size_t>(v)].ep->gt.poses[views[static_cast<std::size_t>(v)].view];
    const Tensor2 raw_v = raw.middleRows(v * m_count, m_count);
    GeneratorLoss gl = generator_loss(raw_v, gt, cfg.wta_k, cfg.lambda_t);
    out.generator += inv_v * gl.loss;
    if (want) d_raw.middleRows(v * m_count, m_count) += inv_v * gl.grad_raw;
    auto& hv = hyps[static_cast<std::size_t>(v)];
    hv.reserve(static_cast<std::size_t>(m_count));
    for (Eigen::Index m = 0; m < m_count; ++m) hv.push_back(raw_to_pose(raw_v.row(m)));
  }

  Rng rng(noise_seed);
  const Mlp& pose_net = model.pose_net();
  const Mlp& disc = model.discriminator_head();

  // Rotation-quaternion gradient of a density loss, accumulated into d_raw.
  auto push_distance_grads = [&](Eigen::Index v, const Pose& gt, const std::vector<double>& g) {
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const Eigen::Index row = v * m_count + m;
      const Vec4 q = raw.row(row).segment<4>(0).transpose();
      d_raw.row(row).segment<4>(0) +=
          (inv_v * g[static_cast<std::size_t>(m)]) * quaternion_angle_grad(gt.rotation.quaternion(), q).transpose();
    }
  };

  MlpTape scale_tape;
  Tensor2 scale_z, d_scale_z;

  switch (cfg.training_mode) {
    case TrainingMode::contrastive: {
      const bool shared_grid = cfg.negative_mode == NegativeMode::random_grid;
      std::vector<Pose> grid;
      Tensor2 e_grid, d_e_grid;
      MlpTape grid_tape;
      if (shared_grid) {
        grid = make_negatives(model, params, ctx, 0, {}, sampler, rng);
        e_grid = pose_net.forward(params, pose_features(grid), want ? &grid_tape : nullptr);
        if (want) d_e_grid = Tensor2::Zero(e_grid.rows(), dim);
      }
      for (Eigen::Index v = 0; v < n_views; ++v) {
        const auto& ref = views[static_cast<std::size_t>(v)];
        const Pose& gt = ref.ep->gt.poses[ref.view];
        MlpTape pose_tape, disc_tape;
        Tensor2 e;
        Eigen::Index n_neg = 0;
        if (shared_grid) {
          const Tensor2 e_gt = pose_net.forward(params, pose_features({gt}), want ? &pose_tape : nullptr);
          n_neg = e_grid.rows();
          e.resize(n_neg + 1, dim);
          e.topRows(n_neg) = e_grid;
          e.bottomRows(1) = e_gt;
        } else {
          std::vector<Pose> cand = make_negatives(model, params, ctx, static_cast<std::size_t>(v),
                                                  hyps[static_cast<std::size_t>(v)], sampler, rng);
          n_neg = static_cast<Eigen::Index>(cand.size());
          cand.push_back(gt);
          e = pose_net.forward(params, pose_features(cand), want ? &pose_tape : nullptr);
        }
        Tensor2 h = e.rowwise() + ctx.g.row(v);
        const Tensor2 logits = disc.forward(params, h, want ? &disc_tape : nullptr);
        ScoreSet s;
        s.sample_logits.assign(logits.data(), logits.data() + n_neg);
        s.gt_logit = logits(n_neg, 0);
        const ContrastiveLoss cl = contrastive_nll(s);
        out.discriminator += inv_v * cl.loss;
        if (!want) continue;
        Tensor2 d_logits(n_neg + 1, 1);
        for (Eigen::Index i = 0; i < n_neg; ++i) d_logits(i, 0) = inv_v * cl.grad_samples[static_cast<std::size_t>(i)];
        d_logits(n_neg, 0) = inv_v * cl.grad_gt;
        const Tensor2 d_h = disc.backward(params, disc_tape, d_logits, *grads);
        d_ctx.row(v) += d_h.colwise().sum();
        if (shared_grid) {
          d_e_grid += d_h.topRows(n_neg);
          pose_net.backward(params, pose_tape, d_h.bottomRows(1), *grads);
        } else {
          pose_net.backward(params, pose_tape, d_h, *grads);
        }
      }
      if (want && shared_grid) pose_net.backward(params, grid_tape, d_e_grid, *grads);
      break;
    }
    case TrainingMode::kde_nll: {
      for (Eigen::Index v = 0; v < n_views; ++v) {
        const auto& ref = views[static_cast<std::size_t>(v)];
        const Pose& gt = ref.ep->gt.poses[ref.view];
        std::vector<Rotation> rots;
        for (const auto& p : hyps[static_cast<std::size_t>(v)]) rots.push_back(p.rotation);
        const KdeNll nll = density_nll(KdeModel(std::move(rots), cfg.kde_bandwidth), gt.rotation);
        out.discriminator += inv_v * nll.loss;
        if (want) push_distance_grads(v, gt, nll.grad_distances);
      }
      break;
    }
    case TrainingMode::mm_nll: {
      scale_z = model.scale_head().forward(params, h_gen, want ? &scale_tape : nullptr);
      if (want) d_scale_z = Tensor2::Zero(scale_z.rows(), 1);
      for (Eigen::Index v = 0; v < n_views; ++v) {
        const auto& ref = views[static_cast<std::size_t>(v)];
        const Pose& gt = ref.ep->gt.poses[ref.view];
        const auto& hv = hyps[static_cast<std::size_t>(v)];
        MlpTape pose_tape, disc_tape;
        const Tensor2 e = pose_net.forward(params, pose_features(hv), want ? &pose_tape : nullptr);
        Tensor2 h = e.rowwise() + ctx.g.row(v);
        const Tensor2 logits = disc.forward(params, h, want ? &disc_tape : nullptr);
        std::vector<double> w = contrastive_probs(ScoreSet{{logits.data(), logits.data() + m_count}, std::nullopt});
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        std::vector<MixtureComponent> comps;
        comps.reserve(hv.size());
        for (Eigen::Index m = 0; m < m_count; ++m) {
          const double z = scale_z(v * m_count + m, 0);
          comps.push_back({hv[static_cast<std::size_t>(m)].rotation, w[static_cast<std::size_t>(m)] / total,
                           softplus(z) + cfg.min_scale});
        }
        const MixtureNll nll = density_nll(MixtureModel(std::move(comps)), gt.rotation);
        out.discriminator += inv_v * nll.loss;
        if (!want) continue;
        push_distance_grads(v, gt, nll.grad_distances);
        double wg = 0.0;
        for (Eigen::Index m = 0; m < m_count; ++m) wg += w[static_cast<std::size_t>(m)] * nll.grad_weights[static_cast<std::size_t>(m)];
        Tensor2 d_logits(m_count, 1);
        for (Eigen::Index m = 0; m < m_count; ++m) {
          const auto i = static_cast<std::size_t>(m);
          d_logits(m, 0) = inv_v * w[i] * (nll.grad_weights[i] - wg);
          d_scale_z(v * m_count + m, 0) = inv_v * nll.grad_scales[i] * sigmoid(scale_z(v * m_count + m, 0));
        }
        const Tensor2 d_h = disc.backward(params, disc_tape, d_logits, *grads);
        d_ctx.row(v) += d_h.colwise().sum();
        // The weighted hypotheses are generator outputs, so the scoring path
        // also feeds gradient back into the generator.
        const Tensor2 d_feat = pose_net.backward(params, pose_tape, d_h, *grads);
        d_raw.middleRows(v * m_count, m_count) += pose_features_backward(raw.middleRows(v * m_count, m_count), d_feat);
      }
      break;
    }
  }
  out.total = out.generator + out.discriminator;
  if (!want) return out;

  Tensor2 d_h_gen = model.generator_head().backward(params, gen_tape, d_raw, *grads);
  if (cfg.training_mode == TrainingMode::mm_nll) {
    d_h_gen += model.scale_head().backward(params, scale_tape, d_scale_z, *grads);
  }
  Tensor2 d_qe = Tensor2::Zero(m_count, dim);
  for (Eigen::Index v = 0; v < n_views; ++v) {
    const auto block = d_h_gen.middleRows(v * m_count, m_count);
    d_ctx.row(v) += block.colwise().sum();
    d_qe += block;
  }
  model.context_net().backward(params, ctx_tape, d_ctx, *grads);
  add_grad(*grads, kQueriesParam, model.query_net().backward(params, query_tape, d_qe, *grads));
  return out;
}

StepMetrics train_step(const AdenModel& model, ParamStore& params,
                       const std::vector<Episode>& batch, const EpisodeSampler& sampler,
                       const AdamConfig& adam, std::uint64_t noise_seed) {
  Gradients grads = params.zero_gradients();
  StepMetrics m;
  m.loss = batch_loss(model, params, batch, sampler, noise_seed, &grads);
  if (!std::isfinite(m.loss.total) || !grads_finite(grads)) {
    std::ostringstream os;
    os << "non-finite loss or gradient at step " << params.step() << " (L_g=" << m.loss.generator
       << ", L_d=" << m.loss.discriminator << ")";
    throw NumericalDivergence(os.str());
  }
  adam_step(params, grads, adam);
  if (!params.all_finite()) {
    throw NumericalDivergence("non-finite parameter after step " + std::to_string(params.step()));
  }
  m.step = params.step();
  return m;
}

InferenceMethod default_inference(const ModelConfig& m) {
  switch (m.training_mode) {
    case TrainingMode::kde_nll: return InferenceMethod::kde;
    case TrainingMode::mm_nll: return InferenceMethod::mm;
    default: return InferenceMethod::discriminator;
  }
}

std::uint64_t step_seed(std::uint64_t run_seed, std::uint64_t step, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(run_seed) ^ step) ^ (stream * 0xd1b54a32d192ed03ULL));
}

std::vector<Episode> sample_batch(const EpisodeSampler& sampler, std::size_t batch_size,
                                  std::uint64_t run_seed, std::uint64_t step) {
  Rng rng(step_seed(run_seed, step, 2));
  std::vector<Episode> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(sampler.sample(rng));
  return out;
}

Checkpoint initial_checkpoint(const RunConfig& cfg) {
  cfg.validate();
  Checkpoint ck;
  ck.config = cfg;
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  Rng rng(step_seed(cfg.seed, 0, 0));
  model.init(ck.params, rng);
  return ck;
}

Checkpoint train_loop(const RunConfig& cfg, std::optional<Checkpoint> resume,
                      const EpochCallback& on_epoch) {
  cfg.validate();
  Checkpoint ck = resume ? std::move(*resume) : initial_checkpoint(cfg);
  ck.config = cfg;
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  const EpisodeSampler sampler(cfg.data);

  EvalConfig snap = cfg.eval;
  snap.scenes = cfg.train.snapshot_scenes;
  snap.resamplings = 1;
  snap.method = default_inference(cfg.model);
  const std::vector<Episode> snapshot_eps =
      snap.scenes > 0 ? heldout_episodes(sampler, snap) : std::vector<Episode>{};

  for (std::size_t epoch = ck.epochs_done; epoch < cfg.train.epochs; ++epoch) {
    double lg = 0.0, ld = 0.0;
    for (std::size_t s = 0; s < cfg.train.steps_per_epoch; ++s) {
      const std::uint64_t step = epoch * cfg.train.steps_per_epoch + s;
      const auto batch = sample_batch(sampler, cfg.train.batch_size, cfg.seed, step);
      const StepMetrics m = train_step(model, ck.params, batch, sampler, cfg.train.adam,
                                       step_seed(cfg.seed, step, 1));
      lg += m.loss.generator;
      ld += m.loss.discriminator;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.step = (epoch + 1) * cfg.train.steps_per_epoch;
    const double n = static_cast<double>(std::max<std::size_t>(cfg.train.steps_per_epoch, 1));
    rec.generator_loss = lg / n;
    rec.discriminator_loss = ld / n;
    if (!snapshot_eps.empty()) rec.eval = evaluate_model(model, ck.params, snapshot_eps, snap).report;
    ck.history.push_back(rec);
    ck.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(rec);
  }
  return ck;
}

std::string metrics_csv(const Checkpoint& ck) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(ck.config) << "\n";
  os << "epoch,step,L_g,L_d";
  for (double t : ck.config.eval.thresholds_deg) os << ",acc@" << t;
  os << ",closest_err_deg\n";
  char buf[64];
  for (const auto& r : ck.history) {
    os << r.epoch << "," << r.step;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f", r.generator_loss, r.discriminator_loss);
    os << buf;
    for (double t : ck.config.eval.thresholds_deg) {
      auto it = r.eval.acc_at.find(t);
      std::snprintf(buf, sizeof buf, ",%.6f", it == r.eval.acc_at.end() ? 0.0 : it->second);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", r.eval.closest_err_deg.mean);
    os << buf;
  }
  return os.str();
}

}  // namespace aden
