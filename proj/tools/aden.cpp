// aden: train, evaluate, ablate and self-check multi-hypothesis pose models.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "aden/config.hpp"
#include "aden/errors.hpp"
#include "aden/eval.hpp"
#include "aden/experiments.hpp"
#include "aden/selfcheck.hpp"
#include "aden/serialize.hpp"
#include "aden/trainer.hpp"

namespace fs = std::filesystem;
using namespace aden;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

RunConfig load_config_with_env(const std::string& path) {
  RunConfig cfg = load_run_config(path);
  if (const char* s = std::getenv("ADEN_SEED")) {
    try {
      std::size_t pos = 0;
      cfg.seed = std::stoull(s, &pos);
      if (pos != std::string(s).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(std::string("ADEN_SEED is not an unsigned integer: '") + s + "'");
    }
  }
  return cfg;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string resolve(const std::string& out_dir, const std::string& path) {
  if (out_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(out_dir) / path).string();
}

struct TrainArgs {
  std::string config, out, resume;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = load_config_with_env(a.config);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    RunConfig cmp = ck.config;
    cmp.train.epochs = cfg.train.epochs;
    cmp.checkpoint_path = cfg.checkpoint_path;
    cmp.metrics_path = cfg.metrics_path;
    if (config_hash(cmp) != config_hash(cfg)) {
      throw ConfigError("checkpoint '" + a.resume + "' was trained with a different config");
    }
    resume = std::move(ck);
  }
  if (!a.out.empty()) fs::create_directories(a.out);
  const std::string ckpt_path = resolve(a.out, cfg.checkpoint_path);
  const std::string metrics_path = resolve(a.out, cfg.metrics_path);

  const Checkpoint ck = train_loop(cfg, std::move(resume), [&](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " step " << r.step << " L_g " << fmt6(r.generator_loss)
              << " L_d " << fmt6(r.discriminator_loss);
    for (const auto& [t, v] : r.eval.acc_at) std::cerr << " acc@" << t << " " << fmt6(v);
    std::cerr << "\n";
  });
  save_checkpoint(ck, ckpt_path);
  write_text_file(metrics_path, metrics_csv(ck));
  std::cout << "checkpoint: " << ckpt_path << "\nmetrics: " << metrics_path << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, csv, json;
  std::optional<std::size_t> episodes;
  std::string inference = "disc";
  std::optional<double> kde_h;
};

std::string eval_csv(const RunConfig& cfg, const EvalConfig& ev, const MetricReport& r) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(cfg) << "\n";
  os << "inference,kde_h,episodes,n_pairs,n_cameras";
  for (double t : ev.thresholds_deg) os << ",acc@" << t;
  for (double f : ev.translation_fractions) os << ",tacc@" << f;
  os << ",closest_err_mean_deg,closest_err_median_deg\n";
  os << to_string(ev.method) << "," << fmt6(ev.kde_bandwidth) << "," << ev.scenes * ev.resamplings << ","
     << r.n_pairs << "," << r.n_cameras;
  auto get = [](const std::map<double, double>& m, double k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  for (double t : ev.thresholds_deg) os << "," << fmt6(get(r.acc_at, t));
  for (double f : ev.translation_fractions) os << "," << fmt6(get(r.translation_acc, f));
  os << "," << fmt6(r.closest_err_deg.mean) << "," << fmt6(r.closest_err_deg.median) << "\n";
  return os.str();
}

int cmd_eval(const EvalArgs& a) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(a.ckpt);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  EvalConfig ev = ck.config.eval;
  ev.method = inference_method_from_string(a.inference);
  if (a.kde_h) ev.kde_bandwidth = *a.kde_h;
  if (a.episodes) ev.scenes = *a.episodes;
  ev.validate();

  const AdenModel model(ck.config.model, ck.config.data.feature_dim);
  const EpisodeSampler sampler(ck.config.data);
  const auto episodes = heldout_episodes(sampler, ev);
  const EvaluationResult res = evaluate_model(model, ck.params, episodes, ev);
  const std::string csv = eval_csv(ck.config, ev, res.report);
  if (a.csv.empty()) {
    std::cout << csv;
  } else {
    write_text_file(a.csv, csv);
  }
  if (!a.json.empty()) {
    std::ostringstream js;
    js << "{\"config_hash\":\"" << config_hash(ck.config) << "\",\"inference\":\"" << to_string(ev.method)
       << "\",\"n_pairs\":" << res.report.n_pairs << ",\"acc_at\":{";
    bool first = true;
    for (const auto& [t, v] : res.report.acc_at) {
      js << (first ? "" : ",") << "\"" << t << "\":" << fmt6(v);
      first = false;
    }
    js << "},\"closest_err_mean_deg\":" << fmt6(res.report.closest_err_deg.mean) << "}\n";
    write_text_file(a.json, js.str());
  }
  return kExitOk;
}

struct AblateArgs {
  std::string study, config, csv;
  std::vector<std::uint64_t> seeds;
};

int cmd_ablate(const AblateArgs& a) {
  const auto& names = study_names();
  if (std::find(names.begin(), names.end(), a.study) == names.end()) {
    throw ConfigError("unknown study '" + a.study + "'");
  }
  const RunConfig cfg = load_config_with_env(a.config);
  StudyOptions opts;
  opts.seeds = a.seeds;
  const auto rows = run_study(a.study, cfg, opts, [](const StudyRow& r) {
    std::cerr << r.study << " " << r.cell << " seed " << r.seed;
    for (const auto& [t, v] : r.acc_at) std::cerr << " acc@" << t << " " << fmt6(v);
    std::cerr << "\n";
  });
  const std::string csv = study_csv(rows, cfg);
  if (a.csv.empty()) {
    std::cout << csv;
  } else {
    write_text_file(a.csv, csv);
  }
  return kExitOk;
}

int cmd_selfcheck(bool corrupt_backward) {
  SelfcheckOptions opts;
  opts.corrupt_backward = corrupt_backward;
  const auto results = run_selfcheck(opts);
  std::cout << format_check_table(results);
  bool ok = true;
  for (const auto& r : results) {
    if (!r.passed) {
      ok = false;
      std::cerr << "failed: " << r.name << "\n";
    }
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-hypothesis camera pose estimation: training, evaluation and ablations"};
  app.require_subcommand(1);
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("--config", train.config, "Run config (JSON)")->required();
  train_cmd->add_option("--out", train.out, "Output directory for checkpoint and metrics");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out episodes");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint (JSON)")->required();
  eval_cmd->add_option("--episodes", eval.episodes, "Held-out scenes (default: from the config)");
  eval_cmd->add_option("--inference", eval.inference, "Selector")->check(CLI::IsMember({"disc", "kde", "mm"}));
  eval_cmd->add_option("--kde-h", eval.kde_h, "KDE / MM bandwidth")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--csv", eval.csv, "Metrics CSV (default: stdout)");
  eval_cmd->add_option("--json", eval.json, "JSON summary");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation sweep");
  ablate_cmd->add_option("--study", ablate.study, "wta_k | negatives | samples | train_density")->required();
  ablate_cmd->add_option("--config", ablate.config, "Base run config (JSON)")->required();
  ablate_cmd->add_option("--csv", ablate.csv, "Output CSV (default: stdout)");
  ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds to sweep (default: the config seed)");

  bool corrupt = false;
  auto* self_cmd = app.add_subcommand("selfcheck", "Gradient, metric and estimator checks");
  self_cmd->add_flag("--corrupt-backward", corrupt, "Negative control: perturb one analytic gradient")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  set_eval_threads(threads);

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*ablate_cmd) return cmd_ablate(ablate);
    if (*self_cmd) return cmd_selfcheck(corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
