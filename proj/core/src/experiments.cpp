#include "aden/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "aden/errors.hpp"
#include "aden/trainer.hpp"

namespace aden {

const std::vector<std::string>& study_names() {
  static const std::vector<std::string> names{"wta_k", "negatives", "samples", "train_density"};
  return names;
}

std::vector<StudyCell> study_cells(const std::string& study, const RunConfig& base) {
  std::vector<StudyCell> cells;
  if (study == "wta_k") {
    const std::size_t m = base.model.num_hypotheses;
    for (std::size_t k : {std::size_t{1}, std::size_t{10}, std::size_t{50}, m}) {
      RunConfig c = base;
      c.model.wta_k = std::min(k, m);
      cells.push_back({k == m ? "k=M" : "k=" + std::to_string(k), c});
    }
  } else if (study == "negatives") {
    for (std::size_t n : {500, 5000, 50000}) {
      RunConfig c = base;
      c.model.training_mode = TrainingMode::contrastive;
      c.model.negative_mode = NegativeMode::random_grid;
      c.model.random_negatives = n;
      cells.push_back({"random_" + std::to_string(n), c});
    }
    for (NegativeMode mode : {NegativeMode::generated_clean, NegativeMode::generated_noisy}) {
      RunConfig c = base;
      c.model.training_mode = TrainingMode::contrastive;
      c.model.negative_mode = mode;
      cells.push_back({to_string(mode), c});
    }
  } else if (study == "train_density") {
    for (TrainingMode mode : {TrainingMode::contrastive, TrainingMode::kde_nll, TrainingMode::mm_nll}) {
      RunConfig c = base;
      c.model.training_mode = mode;
      cells.push_back({to_string(mode), c});
    }
  } else {
    throw InvalidArgument("unknown or non-training study '" + study + "'");
  }
  return cells;
}

StudyRow train_and_evaluate(const RunConfig& cfg, InferenceMethod method) {
  const Checkpoint ck = train_loop(cfg);
  const AdenModel model(cfg.model, cfg.data.feature_dim);
  const EpisodeSampler sampler(cfg.data);
  EvalConfig ev = cfg.eval;
  ev.method = method;
  const auto episodes = heldout_episodes(sampler, ev);
  const EvaluationResult res = evaluate_model(model, ck.params, episodes, ev);
  StudyRow row;
  row.seed = cfg.seed;
  row.acc_at = res.report.acc_at;
  row.closest_err_deg = res.report.closest_err_deg.mean;
  if (!res.mode_coverage.empty()) {
    row.coverage_min = *std::min_element(res.mode_coverage.begin(), res.mode_coverage.end());
  }
  return row;
}

std::vector<StudyRow> run_study(const std::string& study, const RunConfig& base,
                                const StudyOptions& opts, const StudyProgress& progress) {
  if (std::find(study_names().begin(), study_names().end(), study) == study_names().end()) {
    throw InvalidArgument("unknown study '" + study + "'");
  }
  std::vector<std::uint64_t> seeds = opts.seeds;
  if (seeds.empty()) seeds.push_back(base.seed);

  std::vector<StudyRow> rows;
  auto emit = [&](StudyRow r) {
    if (progress) progress(r);
    rows.push_back(std::move(r));
  };

  if (study == "samples") {
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.seed = seed;
      const Checkpoint ck = train_loop(cfg);
      const AdenModel model(cfg.model, cfg.data.feature_dim);
      const EpisodeSampler sampler(cfg.data);
      EvalConfig ev = cfg.eval;
      ev.method = InferenceMethod::discriminator;
      const auto episodes = heldout_episodes(sampler, ev);
      std::vector<std::size_t> counts;
      for (std::size_t m : opts.hypothesis_counts) {
        if (m <= cfg.model.num_hypotheses) counts.push_back(m);
      }
      for (const CurveRow& c :
           sample_efficiency_curve(model, ck.params, episodes, counts, opts.grid_sizes, ev)) {
        StudyRow r;
        r.study = study;
        r.cell = c.source + ":" + std::to_string(c.count);
        r.seed = seed;
        r.acc_at = c.acc_at;
        r.closest_err_deg = c.closest_err_mean_deg;
        emit(std::move(r));
      }
    }
    return rows;
  }

  for (std::uint64_t seed : seeds) {
    for (StudyCell& cell : study_cells(study, base)) {
      cell.config.seed = seed;
      StudyRow r = train_and_evaluate(cell.config, default_inference(cell.config.model));
      r.study = study;
      r.cell = cell.name;
      emit(std::move(r));
    }
  }
  return rows;
}

std::string study_csv_header(const RunConfig& base) {
  std::ostringstream os;
  os << "study,cell,seed";
  for (double t : base.eval.thresholds_deg) os << ",acc@" << t;
  os << ",closest_err_deg,coverage_min";
  return os.str();
}

std::string study_csv(const std::vector<StudyRow>& rows, const RunConfig& base) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(base) << "\n" << study_csv_header(base) << "\n";
  char buf[64];
  for (const StudyRow& r : rows) {
    os << r.study << "," << r.cell << "," << r.seed;
    for (double t : base.eval.thresholds_deg) {
      auto it = r.acc_at.find(t);
      std::snprintf(buf, sizeof buf, ",%.6f", it == r.acc_at.end() ? 0.0 : it->second);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f,", r.closest_err_deg);
    os << buf;
    if (r.coverage_min >= 0.0) {
      std::snprintf(buf, sizeof buf, "%.6f", r.coverage_min);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace aden
