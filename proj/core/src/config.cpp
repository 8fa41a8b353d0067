#include "aden/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "aden/errors.hpp"
#include "json.hpp"

namespace aden {

using nlohmann::json;

namespace {

// Rejects keys outside `allowed` and reads the ones present.
class Section {
public:
  Section(const json& j, std::string name, std::set<std::string> allowed)
      : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
    for (const auto& [key, _] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in '" + name_ + "'");
    }
  }

  template <typename T>
  void read(const char* key, T& out) const {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }

  const json* child(const char* key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

private:
  const json& j_;
  std::string name_;
};

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model",
            {"num_hypotheses", "query_dim", "hidden_width", "head_layers", "embed_layers",
             "activation", "noise_variance", "noise_law", "wta_k", "lambda_t", "training_mode",
             "negative_mode", "random_negatives", "kde_bandwidth", "min_scale"});
  s.read("num_hypotheses", m.num_hypotheses);
  s.read("query_dim", m.query_dim);
  s.read("hidden_width", m.hidden_width);
  s.read("head_layers", m.head_layers);
  s.read("embed_layers", m.embed_layers);
  std::string str;
  try {
    if (s.child("activation")) {
      s.read("activation", str);
      m.activation = activation_from_string(str);
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  s.read("noise_variance", m.noise_variance);
  if (s.child("noise_law")) {
    s.read("noise_law", str);
    m.noise_law = noise_law_from_string(str);
  }
  s.read("wta_k", m.wta_k);
  s.read("lambda_t", m.lambda_t);
  if (s.child("training_mode")) {
    s.read("training_mode", str);
    m.training_mode = training_mode_from_string(str);
  }
  if (s.child("negative_mode")) {
    s.read("negative_mode", str);
    m.negative_mode = negative_mode_from_string(str);
  }
  s.read("random_negatives", m.random_negatives);
  s.read("kde_bandwidth", m.kde_bandwidth);
  s.read("min_scale", m.min_scale);
}

void read_data(const json& j, DataConfig& d) {
  Section s(j, "data",
            {"symmetry_orders", "views_min", "views_max", "noise_sigma", "distance_min",
             "distance_max", "feature_dim", "landmarks", "catalog_seed"});
  s.read("symmetry_orders", d.symmetry_orders);
  s.read("views_min", d.views_min);
  s.read("views_max", d.views_max);
  s.read("noise_sigma", d.noise_sigma);
  s.read("distance_min", d.distance_min);
  s.read("distance_max", d.distance_max);
  s.read("feature_dim", d.feature_dim);
  s.read("landmarks", d.landmarks);
  s.read("catalog_seed", d.catalog_seed);
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train",
            {"epochs", "steps_per_epoch", "batch_size", "snapshot_scenes", "lr", "beta1", "beta2",
             "adam_eps"});
  s.read("epochs", t.epochs);
  s.read("steps_per_epoch", t.steps_per_epoch);
  s.read("batch_size", t.batch_size);
  s.read("snapshot_scenes", t.snapshot_scenes);
  s.read("lr", t.adam.lr);
  s.read("beta1", t.adam.beta1);
  s.read("beta2", t.adam.beta2);
  s.read("adam_eps", t.adam.eps);
}

void read_eval(const json& j, EvalConfig& e) {
  Section s(j, "eval",
            {"thresholds_deg", "translation_fractions", "scenes", "scene_views", "views",
             "resamplings", "symmetry_orders", "inference", "kde_bandwidth", "hypotheses", "seed"});
  s.read("thresholds_deg", e.thresholds_deg);
  s.read("translation_fractions", e.translation_fractions);
  s.read("scenes", e.scenes);
  s.read("scene_views", e.scene_views);
  s.read("views", e.views);
  s.read("resamplings", e.resamplings);
  s.read("symmetry_orders", e.symmetry_orders);
  if (s.child("inference")) {
    std::string str;
    s.read("inference", str);
    try {
      e.method = inference_method_from_string(str);
    } catch (const InvalidArgument& ex) {
      throw ConfigError(ex.what());
    }
  }
  s.read("kde_bandwidth", e.kde_bandwidth);
  s.read("hypotheses", e.hypotheses);
  s.read("seed", e.seed);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  const ModelConfig& m = c.model;
  j["model"] = {{"num_hypotheses", m.num_hypotheses},
                {"query_dim", m.query_dim},
                {"hidden_width", m.hidden_width},
                {"head_layers", m.head_layers},
                {"embed_layers", m.embed_layers},
                {"activation", to_string(m.activation)},
                {"noise_variance", m.noise_variance},
                {"noise_law", to_string(m.noise_law)},
                {"wta_k", m.wta_k},
                {"lambda_t", m.lambda_t},
                {"training_mode", to_string(m.training_mode)},
                {"negative_mode", to_string(m.negative_mode)},
                {"random_negatives", m.random_negatives},
                {"kde_bandwidth", m.kde_bandwidth},
                {"min_scale", m.min_scale}};
  const DataConfig& d = c.data;
  j["data"] = {{"symmetry_orders", d.symmetry_orders},
               {"views_min", d.views_min},
               {"views_max", d.views_max},
               {"noise_sigma", d.noise_sigma},
               {"distance_min", d.distance_min},
               {"distance_max", d.distance_max},
               {"feature_dim", d.feature_dim},
               {"landmarks", d.landmarks},
               {"catalog_seed", d.catalog_seed}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"steps_per_epoch", t.steps_per_epoch},
                {"batch_size", t.batch_size},
                {"snapshot_scenes", t.snapshot_scenes},
                {"lr", t.adam.lr},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"adam_eps", t.adam.eps}};
  const EvalConfig& e = c.eval;
  j["eval"] = {{"thresholds_deg", e.thresholds_deg},
               {"translation_fractions", e.translation_fractions},
               {"scenes", e.scenes},
               {"scene_views", e.scene_views},
               {"views", e.views},
               {"resamplings", e.resamplings},
               {"symmetry_orders", e.symmetry_orders},
               {"inference", to_string(e.method)},
               {"kde_bandwidth", e.kde_bandwidth},
               {"hypotheses", e.hypotheses},
               {"seed", e.seed}};
  j["output"] = {{"checkpoint", c.checkpoint_path}, {"metrics", c.metrics_path}};
  return j;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.validate();
  eval.validate();
  if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(train.adam.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0) ||
      !(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(train.adam.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(j, "config", {"seed", "model", "data", "train", "eval", "output"});
  top.read("seed", c.seed);
  if (auto* m = top.child("model")) read_model(*m, c.model);
  if (auto* d = top.child("data")) read_data(*d, c.data);
  if (auto* t = top.child("train")) read_train(*t, c.train);
  if (auto* e = top.child("eval")) read_eval(*e, c.eval);
  if (auto* o = top.child("output")) {
    Section s(*o, "output", {"checkpoint", "metrics"});
    s.read("checkpoint", c.checkpoint_path);
    s.read("metrics", c.metrics_path);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const RunConfig& cfg) {
  // Output paths do not change results, so they stay out of the hash.
  json j = to_json(cfg);
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig small_run_config() {
  RunConfig c;
  c.model.num_hypotheses = 128;
  c.model.query_dim = 64;
  c.model.hidden_width = 64;
  c.model.random_negatives = 128;
  c.data.views_min = 2;
  c.data.views_max = 3;
  c.train.epochs = 20;
  c.train.steps_per_epoch = 100;
  c.train.batch_size = 4;
  c.train.adam.lr = 1e-3;
  c.eval.scenes = 10;
  c.eval.scene_views = 5;
  c.eval.views = 3;
  c.eval.resamplings = 2;
  return c;
}

}  // namespace aden
