#include "aden/serialize.hpp"

#include <fstream>
#include <sstream>

#include "aden/config.hpp"
#include "aden/errors.hpp"
#include "json.hpp"

namespace aden {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "aden-checkpoint-1";

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

json pose_j(const Pose& p) {
  const Vec4& q = p.rotation.quaternion();
  return {{"q", {q[0], q[1], q[2], q[3]}},
          {"t", {p.translation[0], p.translation[1], p.translation[2]}}};
}

Vec3 vec3_j(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Rotation quat_j(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("expected a quaternion [w,x,y,z]");
  return Rotation::from_quaternion(
      Vec4(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()));
}

Pose pose_from_j(const json& j) { return {quat_j(j.at("q")), vec3_j(j.at("t"))}; }

json tensor_j(const Tensor2& t) {
  return {{"rows", t.rows()},
          {"cols", t.cols()},
          {"data", std::vector<double>(t.data(), t.data() + t.size())}};
}

Tensor2 tensor_from_j(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw FormatError("tensor size does not match its shape");
  }
  Tensor2 t(rows, cols);
  std::copy(data.begin(), data.end(), t.data());
  return t;
}

json tensors_j(const std::map<std::string, Tensor2>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = tensor_j(v);
  return j;
}

std::map<std::string, Tensor2> tensors_from_j(const json& j) {
  std::map<std::string, Tensor2> m;
  for (const auto& [k, v] : j.items()) m.emplace(k, tensor_from_j(v));
  return m;
}

json spec_j(const Mlp& net) {
  std::vector<std::string> acts;
  for (Activation a : net.spec().activations) acts.emplace_back(to_string(a));
  return {{"widths", net.spec().widths}, {"activations", acts}};
}

json report_j(const MetricReport& r) {
  json acc = json::array(), tacc = json::array();
  for (const auto& [k, v] : r.acc_at) acc.push_back({k, v});
  for (const auto& [k, v] : r.translation_acc) tacc.push_back({k, v});
  return {{"acc_at", acc},
          {"translation_acc", tacc},
          {"closest_err_deg",
           {{"mean", r.closest_err_deg.mean},
            {"median", r.closest_err_deg.median},
            {"max", r.closest_err_deg.max},
            {"count", r.closest_err_deg.count}}},
          {"n_pairs", r.n_pairs},
          {"n_cameras", r.n_cameras}};
}

MetricReport report_from_j(const json& j) {
  MetricReport r;
  for (const auto& e : j.at("acc_at")) r.acc_at[e[0].get<double>()] = e[1].get<double>();
  for (const auto& e : j.at("translation_acc")) r.translation_acc[e[0].get<double>()] = e[1].get<double>();
  const json& c = j.at("closest_err_deg");
  r.closest_err_deg.mean = c.at("mean").get<double>();
  r.closest_err_deg.median = c.at("median").get<double>();
  r.closest_err_deg.max = c.at("max").get<double>();
  r.closest_err_deg.count = c.at("count").get<std::size_t>();
  r.n_pairs = j.at("n_pairs").get<std::size_t>();
  r.n_cameras = j.at("n_cameras").get<std::size_t>();
  return r;
}

template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ") + what + ": " + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

std::string pose_to_json(const Pose& p) { return pose_j(p).dump(); }

Pose pose_from_json(const std::string& text) {
  const json j = parse(text, "pose");
  return guarded("pose", [&] { return pose_from_j(j); });
}

std::string kde_to_json(const KdeModel& m) {
  json s = json::array();
  for (const Rotation& r : m.samples) {
    const Vec4& q = r.quaternion();
    s.push_back({q[0], q[1], q[2], q[3]});
  }
  return json{{"samples", s}, {"bandwidth", m.bandwidth}}.dump();
}

KdeModel kde_from_json(const std::string& text) {
  const json j = parse(text, "KDE model");
  return guarded("KDE model", [&] {
    std::vector<Rotation> s;
    for (const auto& q : j.at("samples")) s.push_back(quat_j(q));
    return KdeModel(std::move(s), j.at("bandwidth").get<double>());
  });
}

std::string mixture_to_json(const MixtureModel& m) {
  json c = json::array();
  for (const auto& comp : m.components) {
    const Vec4& q = comp.pose.quaternion();
    c.push_back({{"q", {q[0], q[1], q[2], q[3]}}, {"weight", comp.weight}, {"scale", comp.scale}});
  }
  return json{{"components", c}}.dump();
}

MixtureModel mixture_from_json(const std::string& text) {
  const json j = parse(text, "mixture model");
  return guarded("mixture model", [&] {
    std::vector<MixtureComponent> c;
    for (const auto& e : j.at("components")) {
      c.push_back({quat_j(e.at("q")), e.at("weight").get<double>(), e.at("scale").get<double>()});
    }
    return MixtureModel(std::move(c));
  });
}

std::string episode_to_json(const Episode& ep) {
  json poses = json::array(), modes = json::array(), feats = json::array();
  for (const Pose& p : ep.gt.poses) poses.push_back(pose_j(p));
  for (const auto& view_modes : ep.modes) {
    json vm = json::array();
    for (const Pose& p : view_modes) vm.push_back(pose_j(p));
    modes.push_back(vm);
  }
  for (Eigen::Index r = 0; r < ep.view_features.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(ep.view_features.cols()));
    for (Eigen::Index c = 0; c < ep.view_features.cols(); ++c) row[static_cast<std::size_t>(c)] = ep.view_features(r, c);
    feats.push_back(row);
  }
  const Vec3& oc = ep.gt.object_center;
  const Vec3& ax = ep.symmetry.axis;
  return json{{"poses", poses},
              {"scale", ep.gt.scale},
              {"object_center", {oc[0], oc[1], oc[2]}},
              {"modes", modes},
              {"features", feats},
              {"symmetry", {{"order", ep.symmetry.order}, {"axis", {ax[0], ax[1], ax[2]}}}},
              {"object_seed", ep.object_seed}}
      .dump();
}

Episode episode_from_json(const std::string& text) {
  const json j = parse(text, "episode");
  return guarded("episode", [&] {
    Episode ep;
    for (const auto& p : j.at("poses")) ep.gt.poses.push_back(pose_from_j(p));
    ep.gt.scale = j.at("scale").get<double>();
    ep.gt.object_center = vec3_j(j.at("object_center"));
    for (const auto& vm : j.at("modes")) {
      std::vector<Pose> v;
      for (const auto& p : vm) v.push_back(pose_from_j(p));
      ep.modes.push_back(std::move(v));
    }
    const json& f = j.at("features");
    const auto rows = static_cast<Eigen::Index>(f.size());
    const auto cols = rows ? static_cast<Eigen::Index>(f[0].size()) : 0;
    ep.view_features.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = f[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged feature matrix");
      for (Eigen::Index c = 0; c < cols; ++c) ep.view_features(r, c) = row[static_cast<std::size_t>(c)];
    }
    const json& s = j.at("symmetry");
    ep.symmetry = SymmetryGroup::cyclic(s.at("order").get<int>(), vec3_j(s.at("axis")));
    ep.object_seed = j.at("object_seed").get<std::uint64_t>();
    return ep;
  });
}

std::string checkpoint_to_json(const Checkpoint& ck) {
  const AdenModel model(ck.config.model, ck.config.data.feature_dim);
  json layers = {{"ctx", spec_j(model.context_net())},
                 {"query", spec_j(model.query_net())},
                 {"gen", spec_j(model.generator_head())},
                 {"pose", spec_j(model.pose_net())},
                 {"disc", spec_j(model.discriminator_head())}};
  if (model.has_scale_head()) layers["scale"] = spec_j(model.scale_head());
  json hist = json::array();
  for (const auto& r : ck.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"step", r.step},
                    {"L_g", r.generator_loss},
                    {"L_d", r.discriminator_loss},
                    {"eval", report_j(r.eval)}});
  }
  json j = {{"format", kCheckpointFormat},
            {"config", json::parse(run_config_to_json(ck.config))},
            {"config_hash", config_hash(ck.config)},
            {"seed", ck.config.seed},
            {"epochs_done", ck.epochs_done},
            {"layers", layers},
            {"params", tensors_j(ck.params.params())},
            {"optimizer",
             {{"step", ck.params.step()},
              {"m", tensors_j(ck.params.first_moments())},
              {"v", tensors_j(ck.params.second_moments())}}},
            {"history", hist}};
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = parse(text, "checkpoint");
  return guarded("checkpoint", [&] {
    if (j.value("format", "") != kCheckpointFormat) throw FormatError("not an aden checkpoint");
    Checkpoint ck;
    try {
      ck.config = parse_run_config(j.at("config").dump());
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    if (j.at("config_hash").get<std::string>() != config_hash(ck.config)) {
      throw FormatError("checkpoint config hash mismatch");
    }
    ck.epochs_done = j.at("epochs_done").get<std::size_t>();

    // Parameter shapes must match the architecture the config describes.
    const Checkpoint fresh = initial_checkpoint(ck.config);
    auto params = tensors_from_j(j.at("params"));
    if (params.size() != fresh.params.params().size()) throw FormatError("checkpoint parameter set mismatch");
    for (auto& [name, t] : params) {
      if (!fresh.params.contains(name)) throw FormatError("unexpected parameter '" + name + "'");
      const Tensor2& ref = fresh.params.get(name);
      if (ref.rows() != t.rows() || ref.cols() != t.cols()) {
        throw FormatError("shape mismatch for parameter '" + name + "'");
      }
      ck.params.add(name, std::move(t));
    }
    const json& opt = j.at("optimizer");
    ck.params.set_state(tensors_from_j(opt.at("m")), tensors_from_j(opt.at("v")),
                        opt.at("step").get<std::uint64_t>());
    for (const auto& h : j.at("history")) {
      EpochRecord r;
      r.epoch = h.at("epoch").get<std::size_t>();
      r.step = h.at("step").get<std::uint64_t>();
      r.generator_loss = h.at("L_g").get<double>();
      r.discriminator_loss = h.at("L_d").get<double>();
      r.eval = report_from_j(h.at("eval"));
      ck.history.push_back(std::move(r));
    }
    return ck;
  });
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  write_text_file(path, checkpoint_to_json(ck));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace aden
