#include "aden/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "aden/density.hpp"
#include "aden/errors.hpp"
#include "aden/eval.hpp"
#include "aden/model.hpp"
#include "aden/nnet.hpp"
#include "aden/rotmath.hpp"
#include "aden/synthdata.hpp"
#include "aden/trainer.hpp"

namespace aden {
namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

template <typename F>
CheckResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Central differences of f over a flat parameter vector.
double max_fd_error(const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& x, const std::vector<double>& analytic,
                    double eps = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    const double num = (f(xp) - f(xm)) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic[i], num));
  }
  return worst;
}

CheckResult grad_result(double worst, double tol = 1e-4) {
  return {"", worst < tol, fmt("max rel err %.2e (tol %.0e)", worst, tol), 0.0};
}

CheckResult from_report(const GradCheckReport& rep, double tol) {
  CheckResult r;
  r.passed = rep.passed;
  r.detail = fmt("max rel err %.2e (tol %.0e)", rep.max_rel_error, tol);
  if (!rep.passed && rep.worst()) {
    r.detail += " at " + rep.worst()->name + "[" + std::to_string(rep.worst()->index) + "]";
  }
  return r;
}

}  // namespace

CheckResult check_geodesic_axioms(std::size_t triples, std::uint64_t seed, double tol) {
  return timed("geodesic_axioms", [&] {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < triples; ++i) {
      const Rotation a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
      const Rotation g = random_rotation(rng);
      const double ab = geodesic_distance(a, b), ba = geodesic_distance(b, a);
      const double ac = geodesic_distance(a, c), bc = geodesic_distance(b, c);
      worst = std::max(worst, geodesic_distance(a, a));
      worst = std::max(worst, std::abs(ab - ba));
      worst = std::max(worst, ac - (ab + bc));
      worst = std::max(worst, -ab);
      worst = std::max(worst, ab - std::numbers::pi);
      worst = std::max(worst, std::abs(geodesic_distance(g * a, g * b) - ab));
      worst = std::max(worst, std::abs(geodesic_distance(a * g, b * g) - ab));
    }
    return CheckResult{"", worst <= tol, fmt("max violation %.2e over %.0f triples", worst, double(triples)), 0};
  });
}

CheckResult check_quaternion_roundtrip(std::size_t n, std::uint64_t seed, double tol) {
  return timed("quaternion_roundtrip", [&] {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Rotation r = random_rotation(rng);
      const Rotation back = matrix_to_quat(quat_to_matrix(r));
      worst = std::max(worst, (back.quaternion() - r.quaternion()).cwiseAbs().maxCoeff());
      const Mat3 m = r.matrix();
      worst = std::max(worst, (quat_to_matrix(matrix_to_quat(m)) - m).cwiseAbs().maxCoeff());
    }
    return CheckResult{"", worst <= tol, fmt("max error %.2e", worst), 0};
  });
}

CheckResult check_umeyama_planted(std::size_t instances, std::uint64_t seed, double tol) {
  return timed("umeyama_planted", [&] {
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> us(0.2, 5.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
      Points3 src(8, 3);
      for (Eigen::Index i = 0; i < src.size(); ++i) src.data()[i] = n01(rng);
      const double s = us(rng);
      const Mat3 r = random_rotation(rng).matrix();
      const Vec3 t(n01(rng), n01(rng), n01(rng));
      Points3 dst(8, 3);
      for (Eigen::Index i = 0; i < 8; ++i) dst.row(i) = (s * r * src.row(i).transpose() + t).transpose();
      const Similarity sim = umeyama_align(src, dst);
      worst = std::max({worst, std::abs(sim.scale - s), (sim.rotation - r).cwiseAbs().maxCoeff(),
                        (sim.translation - t).cwiseAbs().maxCoeff()});
    }
    return CheckResult{"", worst <= tol, fmt("max parameter error %.2e", worst), 0};
  });
}

std::vector<CheckResult> check_gradients(std::uint64_t seed, bool corrupt_backward) {
  std::vector<CheckResult> out;
  GradCheckOptions gopt;
  gopt.max_entries_per_tensor = 24;

  for (Activation act : {Activation::tanh, Activation::relu}) {
    out.push_back(timed(std::string("grad_mlp_") + to_string(act), [&] {
      Rng rng(seed);
      const Mlp net("net", MlpSpec::make(5, 7, 2, 3, act));
      ParamStore ps;
      net.init(ps, rng);
      Tensor2 x(4, 5);
      std::normal_distribution<double> n01(0.0, 1.0);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
      Tensor2 target(4, 3);
      for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = n01(rng);
      const bool corrupt = corrupt_backward && act == Activation::tanh;
      auto loss = [&](const ParamStore& p, Gradients* g) {
        MlpTape tape;
        const Tensor2 y = net.forward(p, x, g ? &tape : nullptr);
        const Tensor2 diff = y - target;
        if (g) {
          net.backward(p, tape, diff, *g);
          if (corrupt) (*g)[net.weight_name(0)] *= 1.01;
        }
        return 0.5 * diff.squaredNorm();
      };
      return from_report(gradient_check(ps, loss, gopt), gopt.tol);
    }));
  }

  out.push_back(timed("grad_contrastive_nll", [&] {
    Rng rng(seed + 1);
    std::normal_distribution<double> n01(0.0, 2.0);
    std::vector<double> x(9);
    for (double& v : x) v = n01(rng);
    auto f = [](const std::vector<double>& v) {
      ScoreSet s{{v.begin(), v.end() - 1}, v.back()};
      return contrastive_nll(s).loss;
    };
    const ContrastiveLoss cl = contrastive_nll(ScoreSet{{x.begin(), x.end() - 1}, x.back()});
    std::vector<double> a = cl.grad_samples;
    a.push_back(cl.grad_gt);
    return grad_result(max_fd_error(f, x, a));
  }));

  out.push_back(timed("grad_kde_nll", [&] {
    Rng rng(seed + 2);
    const Rotation gt = random_rotation(rng);
    std::vector<Rotation> samples;
    std::normal_distribution<double> n01(0.0, 0.4);
    for (int i = 0; i < 6; ++i) {
      samples.push_back(gt * Rotation::from_axis_angle(Vec3(n01(rng), n01(rng), n01(rng)), 0.5 + 0.3 * i));
    }
    const double h = 0.3;
    // x = (4 quaternion components per sample..., h)
    std::vector<double> x;
    for (const auto& s : samples) x.insert(x.end(), s.quaternion().data(), s.quaternion().data() + 4);
    x.push_back(h);
    auto f = [&](const std::vector<double>& v) {
      std::vector<Rotation> rs;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        rs.push_back(Rotation::from_quaternion(v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]));
      }
      return density_nll(KdeModel(rs, v.back()), gt).loss;
    };
    const KdeNll nll = density_nll(KdeModel(samples, h), gt);
    std::vector<double> a;
    for (const Vec4& g : nll.grad_quaternions) a.insert(a.end(), g.data(), g.data() + 4);
    a.push_back(nll.grad_bandwidth);
    return grad_result(max_fd_error(f, x, a));
  }));

  out.push_back(timed("grad_mm_nll", [&] {
    Rng rng(seed + 3);
    const Rotation gt = random_rotation(rng);
    std::normal_distribution<double> n01(0.0, 0.4);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<MixtureComponent> comps;
    for (int i = 0; i < 5; ++i) {
      comps.push_back({gt * Rotation::from_axis_angle(Vec3(n01(rng), n01(rng), n01(rng)), 0.4 + 0.3 * i),
                       u(rng), 0.2 + 0.2 * u(rng)});
    }
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;
    // x = (quaternion, scale) per component; weights move only along
    // simplex-preserving directions e_i - e_j.
    std::vector<double> x;
    for (const auto& c : comps) {
      x.insert(x.end(), c.pose.quaternion().data(), c.pose.quaternion().data() + 4);
      x.push_back(c.scale);
    }
    auto build = [&](const std::vector<double>& v, const std::vector<double>& w) {
      std::vector<MixtureComponent> cs;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const double* p = &v[5 * i];
        cs.push_back({Rotation::from_quaternion(p[0], p[1], p[2], p[3]), w[i], p[4]});
      }
      return MixtureModel(cs);
    };
    std::vector<double> w0;
    for (const auto& c : comps) w0.push_back(c.weight);
    auto f = [&](const std::vector<double>& v) { return density_nll(build(v, w0), gt).loss; };
    const MixtureNll nll = density_nll(MixtureModel(comps), gt);
    std::vector<double> a;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      a.insert(a.end(), nll.grad_quaternions[i].data(), nll.grad_quaternions[i].data() + 4);
      a.push_back(nll.grad_scales[i]);
    }
    double worst = max_fd_error(f, x, a);
    const double eps = 1e-6;
    for (std::size_t i = 0; i + 1 < comps.size(); ++i) {
      std::vector<double> wp = w0, wm = w0;
      wp[i] += eps;
      wp[i + 1] -= eps;
      wm[i] -= eps;
      wm[i + 1] += eps;
      const double num = (density_nll(build(x, wp), gt).loss - density_nll(build(x, wm), gt).loss) / (2.0 * eps);
      worst = std::max(worst, rel_err(nll.grad_weights[i] - nll.grad_weights[i + 1], num));
    }
    return grad_result(worst);
  }));

  // Joint loss. Negatives are detached, so the contrastive check uses
  // random negatives, which do not depend on the parameters.
  for (TrainingMode mode : {TrainingMode::contrastive, TrainingMode::kde_nll, TrainingMode::mm_nll}) {
    out.push_back(timed(std::string("grad_joint_") + to_string(mode), [&] {
      ModelConfig mc;
      mc.num_hypotheses = 6;
      mc.query_dim = 6;
      mc.hidden_width = 6;
      mc.head_layers = 1;
      mc.embed_layers = 1;
      mc.activation = Activation::tanh;
      mc.training_mode = mode;
      mc.negative_mode = NegativeMode::random_grid;
      mc.random_negatives = 5;
      mc.kde_bandwidth = 0.5;
      DataConfig dc;
      dc.feature_dim = 8;
      dc.landmarks = 8;
      dc.symmetry_orders = {1, 2};
      const AdenModel model(mc, dc.feature_dim);
      const EpisodeSampler sampler(dc);
      Rng rng(seed + 4);
      ParamStore ps;
      model.init(ps, rng);
      std::vector<Episode> batch{sampler.sample(rng, 3, 1), sampler.sample(rng, 2, 2)};
      auto loss = [&](const ParamStore& p, Gradients* g) {
        return batch_loss(model, p, batch, sampler, seed + 5, g).total;
      };
      GradCheckOptions o = gopt;
      o.max_entries_per_tensor = 6;
      return from_report(gradient_check(ps, loss, o), o.tol);
    }));
  }
  return out;
}

CheckResult check_haar_invariance(std::size_t nodes, std::uint64_t seed, double tol) {
  return timed("haar_invariance", [&] {
    const double h = 0.4;
    Rng rng(seed);
    std::vector<Rotation> samples;
    for (int i = 0; i < 100; ++i) samples.push_back(random_rotation(rng));
    const GridOracle grid = GridOracle::random(nodes, seed + 1);

    // Closed form: Haar angle density (1 - cos t) / pi on [0, pi], total volume pi^2.
    const int steps = 20000;
    double kernel = 0.0;
    for (int i = 0; i < steps; ++i) {
      const double t = (i + 0.5) * std::numbers::pi / steps;
      kernel += std::exp(-t / h) * (1.0 - std::cos(t)) / std::numbers::pi;
    }
    kernel *= std::numbers::pi / steps;
    const double exact = kSo3Volume * kernel / (h * h * h);

    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      const Rotation g = k == 0 ? Rotation::identity() : random_rotation(rng);
      std::vector<Rotation> moved;
      for (const auto& s : samples) moved.push_back(g * s);
      const KdeModel kde(moved, h);
      double sum = 0.0;
      for (const auto& n : grid.nodes) sum += kde_density(kde, n);
      worst = std::max(worst, std::abs(sum * grid.node_weight - exact) / exact);
    }
    return CheckResult{"", worst <= tol, fmt("max rel deviation %.2e from closed form (tol %.0e)", worst, tol), 0};
  });
}

Lemma1Result lemma1_experiment(std::size_t grid_nodes, std::size_t samples, std::uint64_t seed,
                               std::size_t variance_trials, std::size_t variance_n) {
  const GridOracle grid = GridOracle::random(grid_nodes, seed);
  Rng rng(seed + 1);
  const Mat3 anchor = random_rotation(rng).matrix();
  const Eigen::Vector2d theta(4.0, -2.0);

  auto features = [&](const Rotation& r) {
    const Mat3 m = r.matrix();
    return Eigen::Vector2d(std::cos(geodesic_distance(m, anchor)), m(2, 2));
  };
  auto log_z = [&](const Eigen::Vector2d& th) {
    return log_partition_brute([&](const Rotation& r) { return th.dot(features(r)); }, grid);
  };

  Lemma1Result res;
  const double eps = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d tp = theta, tm = theta;
    tp[i] += eps;
    tm[i] -= eps;
    res.finite_difference[i] = (log_z(tp) - log_z(tm)) / (2.0 * eps);
  }

  // Exact samples of the grid-normalized density.
  std::vector<double> w(grid.nodes.size());
  double wmax = -1e300;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = theta.dot(features(grid.nodes[i]));
    wmax = std::max(wmax, w[i]);
  }
  for (double& v : w) v = std::exp(v - wmax);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  auto draw = [&](std::size_t n) {
    std::vector<Rotation> s;
    s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.push_back(grid.nodes[pick(rng)]);
    return s;
  };
  const ScoreGradFn grad = [&](const Rotation& r) -> Eigen::VectorXd { return features(r); };

  res.estimate = log_partition_grad_estimate(draw(samples), grad);
  res.rel_error = (res.estimate - res.finite_difference).norm() / res.finite_difference.norm();

  auto variance = [&](std::size_t n) {
    std::vector<Eigen::Vector2d> est;
    for (std::size_t t = 0; t < variance_trials; ++t) est.push_back(log_partition_grad_estimate(draw(n), grad));
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& e : est) mean += e;
    mean /= static_cast<double>(est.size());
    double v = 0.0;
    for (const auto& e : est) v += (e - mean).squaredNorm();
    return v / static_cast<double>(est.size() - 1);
  };
  res.variance_small = variance(variance_n);
  res.variance_large = variance(10 * variance_n);
  res.variance_ratio = res.variance_small / res.variance_large;
  return res;
}

CheckResult check_lemma1(std::size_t grid_nodes, std::size_t samples, std::uint64_t seed) {
  return timed("lemma1_grad_log_z", [&] {
    const Lemma1Result r = lemma1_experiment(grid_nodes, samples, seed);
    // Tenfold samples should cut the variance about tenfold.
    const bool ok = r.rel_error < 0.02 && r.variance_ratio > 4.0 && r.variance_ratio < 25.0;
    return CheckResult{"", ok, fmt("rel err %.2e, variance ratio %.1f (10x samples)", r.rel_error, r.variance_ratio), 0};
  });
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& o) {
  std::vector<CheckResult> out;
  out.push_back(check_geodesic_axioms(o.geodesic_triples, o.seed));
  out.push_back(check_quaternion_roundtrip(o.roundtrips, o.seed + 1));
  out.push_back(check_umeyama_planted(o.umeyama_instances, o.seed + 2));
  for (auto& r : check_gradients(o.seed + 3, o.corrupt_backward)) out.push_back(std::move(r));
  out.push_back(check_haar_invariance(o.haar_nodes, o.seed + 4));
  out.push_back(check_lemma1(o.lemma_grid, o.lemma_samples, o.seed + 5));
  return out;
}

std::string format_check_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-26s %-6s %8s  %s\n", "check", "result", "seconds", "detail");
  os << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-26s %-6s %8.2f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.seconds, r.detail.c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace aden
