#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "aden/rotmath.hpp"

namespace aden {

/// Cyclic group C_n: rotations by 2 pi k / n about `axis`.
struct SymmetryGroup {
  int order = 1;
  Vec3 axis = Vec3::UnitZ();

  /// Throws InvalidArgument unless order >= 1 and axis is nonzero.
  static SymmetryGroup cyclic(int order, const Vec3& axis = Vec3::UnitZ());
  std::vector<Rotation> elements() const;
};

struct ObjectOptions {
  std::size_t landmarks = 32;
  std::size_t feature_dim = 128;
  double radius = 0.35;            // landmark spread (std dev per axis)
  double projection_scale = 2.0;   // std dev of projection rows
  double bias_scale = 0.5;         // std dev of the bias around the nominal depth
};

/// Symmetric landmark cloud plus the fixed random feature projection.
///
/// Landmarks are centered on the origin (the object center) and the set is
/// closed under the symmetry group. The landmark count is rounded up to a
/// multiple of the group order. Each landmark also carries a fixed random
/// appearance vector, shared along its symmetry orbit, that weights its
/// contribution to every feature (a stand-in for texture).
struct ObjectModel {
  SymmetryGroup symmetry;
  Eigen::Matrix<double, Eigen::Dynamic, 3> landmarks;
  Eigen::Matrix<double, Eigen::Dynamic, 3> projection;  // F x 3
  Eigen::VectorXd bias;                                 // F
  Eigen::MatrixXd appearance;                           // L x F
};

ObjectModel make_object(const SymmetryGroup& symmetry, Rng& rng, const ObjectOptions& opts = {});

/// Mean over landmarks of w_l * tanh(A (R X_l + t) + b), plus N(0, sigma^2)
/// noise, with w_l the landmark's appearance row.
/// Invariant (up to rounding) under pose.rotation -> pose.rotation * S.
Eigen::VectorXd encode_view(const ObjectModel& object, const Pose& pose, double noise_sigma,
                            Rng& rng);

struct EpisodeOptions {
  double noise_sigma = 0.01;
  double distance_min = 0.8;
  double distance_max = 1.2;
};

struct Episode {
  Eigen::MatrixXd view_features;         // N x F
  SceneSet gt;                           // canonicalized
  std::vector<std::vector<Pose>> modes;  // analytic posterior modes per view
  SymmetryGroup symmetry;
  std::uint64_t object_seed = 0;

  std::size_t num_views() const { return gt.poses.size(); }
};

/// Cameras and their features in the object frame, before any view
/// selection or canonicalization.
struct WorldScene {
  std::vector<Pose> cameras;
  Eigen::MatrixXd view_features;
  SymmetryGroup symmetry;
  std::uint64_t object_seed = 0;
};

/// Haar-random cameras looking at the object center (the origin) from
/// distance U[distance_min, distance_max].
WorldScene make_world_scene(std::size_t n_views, const ObjectModel& object,
                            std::uint64_t object_seed, Rng& rng, const EpisodeOptions& opts = {});

/// Episode over the selected cameras, canonicalized on the first selected
/// one, with the analytic mode set of every view.
Episode episode_from_views(const WorldScene& scene, const std::vector<std::size_t>& views);

/// Throws InvalidArgument when n_views < 2.
Episode make_episode(std::size_t n_views, const ObjectModel& object, std::uint64_t object_seed,
                     Rng& rng, const EpisodeOptions& opts = {});

/// Draws a fresh object for the symmetry group and builds an episode on it.
Episode make_episode(std::size_t n_views, const SymmetryGroup& symmetry, Rng& rng,
                     const EpisodeOptions& opts = {});

/// One fixed object per symmetry order, derived from a catalog seed, so
/// that training and evaluation share the same feature map.
class ObjectCatalog {
public:
  ObjectCatalog(std::uint64_t seed, const std::vector<int>& orders, const ObjectOptions& opts = {});

  const ObjectModel& get(int order) const;
  std::uint64_t seed_for(int order) const;
  std::uint64_t seed() const { return seed_; }
  std::size_t feature_dim() const { return feature_dim_; }

private:
  std::uint64_t seed_;
  std::size_t feature_dim_;
  std::map<int, ObjectModel> objects_;
};

/// Episode distribution used for training and held-out evaluation.
struct DataConfig {
  std::vector<int> symmetry_orders{1, 2, 3, 4};
  std::size_t views_min = 2;
  std::size_t views_max = 10;
  double noise_sigma = 0.01;
  double distance_min = 0.8;
  double distance_max = 1.2;
  std::size_t feature_dim = 128;
  std::size_t landmarks = 32;
  std::uint64_t catalog_seed = 7;

  /// Throws ConfigError on invalid ranges.
  void validate() const;
  EpisodeOptions episode_options() const;
  ObjectOptions object_options() const;
};

class EpisodeSampler {
public:
  explicit EpisodeSampler(DataConfig cfg);

  const DataConfig& config() const { return cfg_; }
  const ObjectCatalog& catalog() const { return catalog_; }

  /// View count uniform in [views_min, views_max], symmetry order uniform
  /// over symmetry_orders.
  Episode sample(Rng& rng) const;
  Episode sample(Rng& rng, std::size_t n_views, int order) const;
  WorldScene sample_scene(Rng& rng, std::size_t n_views, int order) const;

  /// Canonical-frame translation drawn from the training prior.
  Vec3 sample_translation(Rng& rng) const;

private:
  DataConfig cfg_;
  ObjectCatalog catalog_;
};

}  // namespace aden
