#pragma once

#include <cstdint>
#include <string>

#include "aden/eval.hpp"
#include "aden/model.hpp"
#include "aden/nnet.hpp"
#include "aden/synthdata.hpp"

namespace aden {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 100;
  std::size_t batch_size = 8;
  std::size_t snapshot_scenes = 8;  // held-out scenes scored after each epoch
  AdamConfig adam;
};

/// Everything a run depends on. Commands are pure functions of this,
/// the seed, and any checkpoint inputs.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  std::string checkpoint_path = "checkpoint.json";
  std::string metrics_path = "metrics.csv";

  /// Throws ConfigError on any invalid range.
  void validate() const;
};

/// Parses JSON; missing keys keep their defaults, unknown keys are
/// rejected. Throws ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical JSON (sorted keys, every field present).
std::string run_config_to_json(const RunConfig& cfg);

/// FNV-1a over the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Desk-scale preset: small widths and step counts that train in minutes
/// on one core.
RunConfig small_run_config();

}  // namespace aden
