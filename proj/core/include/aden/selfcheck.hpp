#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace aden {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelfcheckOptions {
  std::size_t geodesic_triples = 2000;
  std::size_t roundtrips = 2000;
  std::size_t umeyama_instances = 100;
  std::size_t haar_nodes = 100000;
  std::size_t lemma_grid = 5000;
  std::size_t lemma_samples = 50000;
  std::uint64_t seed = 12345;
  /// Negative control: perturbs one analytic MLP gradient so the gradient
  /// check must fail.
  bool corrupt_backward = false;
};

CheckResult check_geodesic_axioms(std::size_t triples, std::uint64_t seed, double tol = 1e-9);
CheckResult check_quaternion_roundtrip(std::size_t n, std::uint64_t seed, double tol = 1e-6);
CheckResult check_umeyama_planted(std::size_t instances, std::uint64_t seed, double tol = 1e-6);
/// One check per differentiable component: MLP (tanh, relu), contrastive
/// NLL, KDE / MM NLL and the joint loss in each training mode.
std::vector<CheckResult> check_gradients(std::uint64_t seed, bool corrupt_backward = false);
/// Grid-integrated KDE against its closed-form integral, before and after a
/// global rotation of the samples.
CheckResult check_haar_invariance(std::size_t nodes, std::uint64_t seed, double tol = 0.01);

/// Sampled grad log Z against finite differences on a grid partition, for
/// the score x(R) = a cos d(R, A) + b R_zz.
struct Lemma1Result {
  Eigen::Vector2d finite_difference;
  Eigen::Vector2d estimate;
  double rel_error = 0.0;
  /// Estimator variance at n and 10 n samples, over repeated trials.
  double variance_small = 0.0;
  double variance_large = 0.0;
  double variance_ratio = 0.0;
};

Lemma1Result lemma1_experiment(std::size_t grid_nodes, std::size_t samples, std::uint64_t seed,
                               std::size_t variance_trials = 40, std::size_t variance_n = 1000);
CheckResult check_lemma1(std::size_t grid_nodes, std::size_t samples, std::uint64_t seed);

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts = {});

/// Fixed-width pass/fail table, one line per check.
std::string format_check_table(const std::vector<CheckResult>& results);

}  // namespace aden
