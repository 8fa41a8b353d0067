#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aden/config.hpp"
#include "aden/eval.hpp"

namespace aden {

/// Names accepted by run_study.
const std::vector<std::string>& study_names();

/// One configuration of a sweep.
struct StudyCell {
  std::string name;
  RunConfig config;
};

/// The cells of a training sweep: wta_k (k = 1, 10, 50, M), negatives
/// (random 500 / 5000 / 50000, generated clean, generated noisy) or
/// train_density (contrastive, kde_nll, mm_nll). Throws InvalidArgument on an
/// unknown study; "samples" has no training cells and also throws.
std::vector<StudyCell> study_cells(const std::string& study, const RunConfig& base);

struct StudyRow {
  std::string study;
  std::string cell;
  std::uint64_t seed = 0;
  std::map<double, double> acc_at;
  double closest_err_deg = 0.0;
  /// Smallest per-mode hypothesis coverage; negative when not measured.
  double coverage_min = -1.0;
};

struct StudyOptions {
  std::vector<std::uint64_t> seeds;  // empty: the config seed
  std::vector<std::size_t> hypothesis_counts{32, 64, 128, 256, 512, 1024};
  std::vector<std::size_t> grid_sizes{500, 5000, 50000, 500000};
};

using StudyProgress = std::function<void(const StudyRow&)>;

/// Trains (where needed) and evaluates every cell for every seed. The
/// samples study trains the base config once per seed and reports the
/// sample-efficiency curve, skipping counts above the model's M.
std::vector<StudyRow> run_study(const std::string& study, const RunConfig& base,
                                const StudyOptions& opts = {}, const StudyProgress& progress = {});

/// Trains `cfg` and evaluates on its held-out episodes with `method`.
StudyRow train_and_evaluate(const RunConfig& cfg, InferenceMethod method);

/// "# config_hash=<hash>" then
/// "study,cell,seed,acc@<t>...,closest_err_deg,coverage_min", one row per
/// StudyRow. coverage_min is empty when not measured.
std::string study_csv(const std::vector<StudyRow>& rows, const RunConfig& base);
std::string study_csv_header(const RunConfig& base);

}  // namespace aden
