#include "aden/nnet.hpp"

#include <algorithm>
#include <cmath>

#include "aden/errors.hpp"

namespace aden {

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + s + "'");
}

MlpSpec MlpSpec::make(std::size_t in, std::size_t hidden_width, std::size_t hidden_layers,
                      std::size_t out, Activation act) {
  MlpSpec s;
  s.widths.push_back(in);
  for (std::size_t i = 0; i < hidden_layers; ++i) s.widths.push_back(hidden_width);
  s.widths.push_back(out);
  s.activations.assign(hidden_layers, act);
  return s;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("MLP needs at least one layer");
  for (std::size_t w : widths) {
    if (w < 1) throw InvalidArgument("MLP widths must be >= 1");
  }
  if (activations.size() != widths.size() - 2) {
    throw InvalidArgument("MLP needs one activation per hidden layer");
  }
}

bool operator==(const MlpSpec& a, const MlpSpec& b) {
  return a.widths == b.widths && a.activations == b.activations;
}

void ParamStore::add(const std::string& name, Tensor2 value) {
  m_[name] = Tensor2::Zero(value.rows(), value.cols());
  v_[name] = Tensor2::Zero(value.rows(), value.cols());
  params_[name] = std::move(value);
}

const Tensor2& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

Tensor2& ParamStore::get_mutable(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += static_cast<std::size_t>(t.size());
  return n;
}

Gradients ParamStore::zero_gradients() const {
  Gradients g;
  for (const auto& [name, t] : params_) g.emplace(name, Tensor2::Zero(t.rows(), t.cols()));
  return g;
}

bool ParamStore::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const auto& kv) { return kv.second.allFinite(); });
}

void ParamStore::set_state(std::map<std::string, Tensor2> m, std::map<std::string, Tensor2> v,
                           std::uint64_t step) {
  for (const auto& [name, t] : params_) {
    auto im = m.find(name);
    auto iv = v.find(name);
    if (im == m.end() || iv == v.end() || im->second.rows() != t.rows() ||
        im->second.cols() != t.cols() || iv->second.rows() != t.rows() ||
        iv->second.cols() != t.cols()) {
      throw ShapeMismatch("optimizer state does not match parameter '" + name + "'");
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  step_ = step;
}

void adam_step(ParamStore& store, const Gradients& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto it = store.params_.find(name);
    if (it == store.params_.end()) throw InvalidArgument("gradient for unknown parameter '" + name + "'");
    if (g.rows() != it->second.rows() || g.cols() != it->second.cols()) {
      throw ShapeMismatch("gradient shape mismatch for '" + name + "'");
    }
  }
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : store.params_) {
    Tensor2& m = store.m_[name];
    Tensor2& v = store.v_[name];
    auto git = grads.find(name);
    if (git != grads.end()) {
      const Tensor2& g = git->second;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    } else {
      m *= cfg.beta1;
      v *= cfg.beta2;
    }
    p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

Mlp::Mlp(std::string name, MlpSpec spec) : name_(std::move(name)), spec_(std::move(spec)) {
  spec_.validate();
}

std::string Mlp::weight_name(std::size_t layer) const { return name_ + ".W" + std::to_string(layer); }
std::string Mlp::bias_name(std::size_t layer) const { return name_ + ".b" + std::to_string(layer); }

void Mlp::init(ParamStore& params, Rng& rng) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    const std::size_t fan_in = spec_.widths[l];
    const std::size_t fan_out = spec_.widths[l + 1];
    double gain = 1.0;
    if (l < spec_.activations.size()) {
      gain = spec_.activations[l] == Activation::relu ? std::sqrt(2.0) : 5.0 / 3.0;
    }
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    Tensor2 w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = bound * u(rng);
    params.add(weight_name(l), std::move(w));
    params.add(bias_name(l), Tensor2::Zero(1, fan_out));
  }
}

Tensor2 Mlp::forward(const ParamStore& params, const Tensor2& input, MlpTape* tape) const {
  if (static_cast<std::size_t>(input.cols()) != spec_.in()) {
    throw ShapeMismatch(name_ + ": expected " + std::to_string(spec_.in()) + " input columns, got " +
                        std::to_string(input.cols()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Tensor2 x = input;
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    if (tape) tape->inputs.push_back(x);
    Tensor2 z = x * params.get(weight_name(l));
    z.rowwise() += params.get(bias_name(l)).row(0);
    if (l < spec_.activations.size()) {
      if (tape) tape->pre.push_back(z);
      if (spec_.activations[l] == Activation::relu) {
        x = z.cwiseMax(0.0);
      } else {
        x = z.array().tanh().matrix();
      }
    } else {
      x = std::move(z);
    }
  }
  return x;
}

Tensor2 Mlp::backward(const ParamStore& params, const MlpTape& tape, const Tensor2& upstream,
                      Gradients& grads) const {
  if (tape.inputs.size() != spec_.num_layers() || tape.pre.size() != spec_.activations.size()) {
    throw ShapeMismatch(name_ + ": tape does not match network");
  }
  if (static_cast<std::size_t>(upstream.cols()) != spec_.out() ||
      upstream.rows() != tape.inputs.front().rows()) {
    throw ShapeMismatch(name_ + ": upstream gradient shape mismatch");
  }
  Tensor2 g = upstream;
  for (std::size_t l = spec_.num_layers(); l-- > 0;) {
    if (l < spec_.activations.size()) {
      const Tensor2& z = tape.pre[l];
      if (spec_.activations[l] == Activation::relu) {
        g.array() *= (z.array() > 0.0).cast<double>();
      } else {
        g.array() *= 1.0 - z.array().tanh().square();
      }
    }
    const Tensor2& x = tape.inputs[l];
    const std::string wn = weight_name(l);
    const std::string bn = bias_name(l);
    auto wit = grads.find(wn);
    if (wit == grads.end()) {
      grads.emplace(wn, x.transpose() * g);
    } else {
      wit->second.noalias() += x.transpose() * g;
    }
    auto bit = grads.find(bn);
    if (bit == grads.end()) {
      grads.emplace(bn, g.colwise().sum());
    } else {
      bit->second += g.colwise().sum();
    }
    g = g * params.get(wn).transpose();
  }
  return g;
}

std::pair<Tensor2, MlpTape> mlp_forward(const Mlp& net, const ParamStore& params,
                                        const Tensor2& input) {
  MlpTape tape;
  Tensor2 out = net.forward(params, input, &tape);
  return {std::move(out), std::move(tape)};
}

Tensor2 mlp_backward(const Mlp& net, const ParamStore& params, const MlpTape& tape,
                     const Tensor2& upstream, Gradients& grads) {
  return net.backward(params, tape, upstream, grads);
}

const GradCheckEntry* GradCheckReport::worst() const {
  if (entries.empty()) return nullptr;
  return &*std::max_element(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
}

GradCheckReport gradient_check(const ParamStore& params, const LossFn& loss,
                               const GradCheckOptions& opts) {
  if (!(opts.eps > 1e-8 && opts.eps < 1e-3)) throw InvalidArgument("eps must lie in (1e-8, 1e-3)");
  Gradients analytic = params.zero_gradients();
  loss(params, &analytic);

  GradCheckReport report;
  ParamStore probe = params;
  for (const auto& [name, value] : params.params()) {
    const auto n = static_cast<std::size_t>(value.size());
    std::size_t stride = 1;
    if (opts.max_entries_per_tensor > 0 && n > opts.max_entries_per_tensor) {
      stride = (n + opts.max_entries_per_tensor - 1) / opts.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      Tensor2& p = probe.get_mutable(name);
      const double orig = p.data()[i];
      p.data()[i] = orig + opts.eps;
      const double up = loss(probe, nullptr);
      p.data()[i] = orig - opts.eps;
      const double down = loss(probe, nullptr);
      p.data()[i] = orig;

      GradCheckEntry e;
      e.name = name;
      e.index = i;
      e.analytic = analytic.at(name).data()[i];
      e.numeric = (up - down) / (2.0 * opts.eps);
      const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), opts.abs_floor});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(std::move(e));
    }
  }
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

}  // namespace aden
