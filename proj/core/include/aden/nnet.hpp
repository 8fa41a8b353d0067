#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aden/rotmath.hpp"

namespace aden {

/// Row-major dense matrix; rows index the batch.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// widths = {in, hidden..., out}; one activation per hidden layer; the final
/// layer is linear.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;

  static MlpSpec make(std::size_t in, std::size_t hidden_width, std::size_t hidden_layers,
                      std::size_t out, Activation act = Activation::relu);
  std::size_t num_layers() const { return widths.size() - 1; }
  std::size_t in() const { return widths.front(); }
  std::size_t out() const { return widths.back(); }
  /// Throws InvalidArgument unless >= 1 layer, every width >= 1 and the
  /// activation count matches.
  void validate() const;
};

bool operator==(const MlpSpec& a, const MlpSpec& b);

using Gradients = std::map<std::string, Tensor2>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameters plus Adam moment buffers and step counter.
class ParamStore {
public:
  void add(const std::string& name, Tensor2 value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor2& get(const std::string& name) const;
  Tensor2& get_mutable(const std::string& name);

  const std::map<std::string, Tensor2>& params() const { return params_; }
  const std::map<std::string, Tensor2>& first_moments() const { return m_; }
  const std::map<std::string, Tensor2>& second_moments() const { return v_; }
  std::uint64_t step() const { return step_; }
  std::size_t num_scalars() const;

  /// Zero tensors matching every parameter.
  Gradients zero_gradients() const;
  bool all_finite() const;

  // Restores optimizer state from a checkpoint.
  void set_state(std::map<std::string, Tensor2> m, std::map<std::string, Tensor2> v,
                 std::uint64_t step);

private:
  friend void adam_step(ParamStore&, const Gradients&, const AdamConfig&);
  std::map<std::string, Tensor2> params_;
  std::map<std::string, Tensor2> m_;
  std::map<std::string, Tensor2> v_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update. Parameters without an entry in `grads`
/// see a zero gradient. Throws ShapeMismatch on a shape disagreement.
void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg);

/// Activations recorded by a forward pass.
struct MlpTape {
  std::vector<Tensor2> inputs;  // input to each layer
  std::vector<Tensor2> pre;     // pre-activation of each hidden layer
};

/// Dense network whose parameters live in a ParamStore under `<name>.W<i>`
/// and `<name>.b<i>`.
class Mlp {
public:
  Mlp() = default;
  Mlp(std::string name, MlpSpec spec);

  const std::string& name() const { return name_; }
  const MlpSpec& spec() const { return spec_; }
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

  /// Kaiming-uniform fan-in weights, zero biases.
  void init(ParamStore& params, Rng& rng) const;

  /// Throws ShapeMismatch unless input.cols() == spec.in().
  Tensor2 forward(const ParamStore& params, const Tensor2& input, MlpTape* tape = nullptr) const;

  /// Accumulates parameter gradients into `grads` and returns d/d input.
  Tensor2 backward(const ParamStore& params, const MlpTape& tape, const Tensor2& upstream,
                   Gradients& grads) const;

private:
  std::string name_;
  MlpSpec spec_;
};

/// Free-function forms of Mlp::forward / Mlp::backward.
std::pair<Tensor2, MlpTape> mlp_forward(const Mlp& net, const ParamStore& params,
                                        const Tensor2& input);
Tensor2 mlp_backward(const Mlp& net, const ParamStore& params, const MlpTape& tape,
                     const Tensor2& upstream, Gradients& grads);

/// Loss callback for gradient checking: returns the loss and, when `grads`
/// is non-null, accumulates analytic gradients into it.
using LossFn = std::function<double(const ParamStore&, Gradients*)>;

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
  const GradCheckEntry* worst() const;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Denominator floor of |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  /// Entries checked per tensor; 0 = every entry.
  std::size_t max_entries_per_tensor = 0;
};

/// Compares analytic gradients with central differences. Throws
/// InvalidArgument unless eps is in (1e-8, 1e-3).
GradCheckReport gradient_check(const ParamStore& params, const LossFn& loss,
                               const GradCheckOptions& opts = {});

}  // namespace aden
