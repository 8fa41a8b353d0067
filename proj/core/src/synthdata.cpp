#include "aden/synthdata.hpp"

#include <cmath>
#include <numbers>

#include "aden/errors.hpp"

namespace aden {

SymmetryGroup SymmetryGroup::cyclic(int order, const Vec3& axis) {
  if (order < 1) throw InvalidArgument("symmetry order must be >= 1");
  const double n = axis.norm();
  if (!(n > 0.0)) throw InvalidArgument("symmetry axis must be nonzero");
  return {order, axis / n};
}

std::vector<Rotation> SymmetryGroup::elements() const {
  std::vector<Rotation> out;
  out.reserve(static_cast<std::size_t>(order));
  out.push_back(Rotation::identity());
  for (int k = 1; k < order; ++k) {
    out.push_back(Rotation::from_axis_angle(axis, 2.0 * std::numbers::pi * k / order));
  }
  return out;
}

ObjectModel make_object(const SymmetryGroup& symmetry, Rng& rng, const ObjectOptions& opts) {
  if (opts.landmarks < 8) throw InvalidArgument("objects need at least 8 landmarks");
  if (opts.feature_dim < 1) throw InvalidArgument("feature dimension must be >= 1");
  std::normal_distribution<double> n01(0.0, 1.0);

  const auto order = static_cast<std::size_t>(symmetry.order);
  const std::size_t base = (opts.landmarks + order - 1) / order;
  const std::vector<Rotation> group = symmetry.elements();

  std::vector<Vec3> seeds(base);
  for (auto& p : seeds) p = opts.radius * Vec3(n01(rng), n01(rng), n01(rng));
  // Center on the axis: the group orbit sum already lies on the axis, so only
  // the axial component of the mean needs removing, which keeps closure.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : seeds) mean += p;
  mean /= static_cast<double>(base);
  if (order == 1) {
    for (auto& p : seeds) p -= mean;
  } else {
    const Vec3 axial = symmetry.axis * symmetry.axis.dot(mean);
    for (auto& p : seeds) p -= axial;
  }

  const auto f = static_cast<Eigen::Index>(opts.feature_dim);
  Eigen::MatrixXd looks(static_cast<Eigen::Index>(base), f);
  for (Eigen::Index i = 0; i < looks.size(); ++i) looks.data()[i] = n01(rng);

  ObjectModel obj;
  obj.symmetry = symmetry;
  obj.landmarks.resize(static_cast<Eigen::Index>(base * order), 3);
  obj.appearance.resize(obj.landmarks.rows(), f);
  Eigen::Index row = 0;
  for (const auto& g : group) {
    const Mat3 m = g.matrix();
    for (std::size_t j = 0; j < base; ++j) {
      obj.landmarks.row(row) = (m * seeds[j]).transpose();
      obj.appearance.row(row++) = looks.row(static_cast<Eigen::Index>(j));
    }
  }

  obj.projection.resize(f, 3);
  obj.bias.resize(f);
  for (Eigen::Index k = 0; k < f; ++k) {
    for (int c = 0; c < 3; ++c) obj.projection(k, c) = opts.projection_scale * n01(rng);
    // Centered on the nominal camera depth of 1 so tanh stays unsaturated.
    obj.bias[k] = -obj.projection(k, 2) + opts.bias_scale * n01(rng);
  }
  return obj;
}

Eigen::VectorXd encode_view(const ObjectModel& object, const Pose& pose, double noise_sigma,
                            Rng& rng) {
  const Mat3 r = pose.rotation.matrix();
  // camera-frame landmarks, L x 3
  Eigen::Matrix<double, Eigen::Dynamic, 3> cam = object.landmarks * r.transpose();
  cam.rowwise() += pose.translation.transpose();
  Eigen::MatrixXd act = cam * object.projection.transpose();  // L x F
  act.rowwise() += object.bias.transpose();
  Eigen::VectorXd f = (act.array().tanh() * object.appearance.array()).colwise().mean().transpose();
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] += noise_sigma * n01(rng);
  }
  return f;
}

WorldScene make_world_scene(std::size_t n_views, const ObjectModel& object,
                            std::uint64_t object_seed, Rng& rng, const EpisodeOptions& opts) {
  std::uniform_real_distribution<double> dist(opts.distance_min, opts.distance_max);
  WorldScene scene;
  scene.symmetry = object.symmetry;
  scene.object_seed = object_seed;
  for (std::size_t i = 0; i < n_views; ++i) {
    const Rotation r = random_rotation(rng);
    scene.cameras.push_back({r, Vec3(0.0, 0.0, dist(rng))});
  }
  scene.view_features.resize(static_cast<Eigen::Index>(n_views), object.projection.rows());
  for (std::size_t i = 0; i < n_views; ++i) {
    scene.view_features.row(static_cast<Eigen::Index>(i)) =
        encode_view(object, scene.cameras[i], opts.noise_sigma, rng).transpose();
  }
  return scene;
}

Episode episode_from_views(const WorldScene& scene, const std::vector<std::size_t>& views) {
  if (views.size() < 2) throw InvalidArgument("episodes need at least 2 views");
  SceneSet world;
  Episode ep;
  ep.symmetry = scene.symmetry;
  ep.object_seed = scene.object_seed;
  ep.view_features.resize(static_cast<Eigen::Index>(views.size()), scene.view_features.cols());
  for (std::size_t i = 0; i < views.size(); ++i) {
    world.poses.push_back(scene.cameras.at(views[i]));
    ep.view_features.row(static_cast<Eigen::Index>(i)) =
        scene.view_features.row(static_cast<Eigen::Index>(views[i]));
  }
  ep.gt = canonicalize_scene(world);

  // The symmetry acts on the object frame; in the canonical frame it is
  // conjugated by the reference rotation.
  const Rotation& r0 = world.poses.front().rotation;
  std::vector<Rotation> conj;
  for (const auto& s : scene.symmetry.elements()) {
    // The identity stays exact so the ground truth is itself a mode.
    conj.push_back(s == Rotation::identity() ? s : r0 * s * r0.inverse());
  }

  ep.modes.resize(views.size());
  ep.modes[0] = {ep.gt.poses[0]};
  for (std::size_t i = 1; i < views.size(); ++i) {
    const Pose& g = ep.gt.poses[i];
    for (const auto& c : conj) ep.modes[i].push_back({g.rotation * c, g.translation});
  }
  return ep;
}

Episode make_episode(std::size_t n_views, const ObjectModel& object, std::uint64_t object_seed,
                     Rng& rng, const EpisodeOptions& opts) {
  if (n_views < 2) throw InvalidArgument("episodes need at least 2 views");
  const WorldScene scene = make_world_scene(n_views, object, object_seed, rng, opts);
  std::vector<std::size_t> all(n_views);
  for (std::size_t i = 0; i < n_views; ++i) all[i] = i;
  return episode_from_views(scene, all);
}

Episode make_episode(std::size_t n_views, const SymmetryGroup& symmetry, Rng& rng,
                     const EpisodeOptions& opts) {
  const std::uint64_t object_seed = rng();
  Rng object_rng(object_seed);
  const ObjectModel object = make_object(symmetry, object_rng);
  return make_episode(n_views, object, object_seed, rng, opts);
}

ObjectCatalog::ObjectCatalog(std::uint64_t seed, const std::vector<int>& orders,
                             const ObjectOptions& opts)
    : seed_(seed), feature_dim_(opts.feature_dim) {
  if (orders.empty()) throw InvalidArgument("catalog needs at least one symmetry order");
  for (int n : orders) {
    if (objects_.count(n)) continue;
    Rng rng(seed_for(n));
    objects_.emplace(n, make_object(SymmetryGroup::cyclic(n), rng, opts));
  }
}

std::uint64_t ObjectCatalog::seed_for(int order) const {
  return seed_ * 1000003ULL + static_cast<std::uint64_t>(order);
}

const ObjectModel& ObjectCatalog::get(int order) const {
  auto it = objects_.find(order);
  if (it == objects_.end()) {
    throw InvalidArgument("catalog has no object of symmetry order " + std::to_string(order));
  }
  return it->second;
}

void DataConfig::validate() const {
  if (symmetry_orders.empty()) throw ConfigError("symmetry_orders must be non-empty");
  for (int n : symmetry_orders) {
    if (n < 1) throw ConfigError("symmetry orders must be >= 1");
  }
  if (views_min < 2 || views_max < views_min) throw ConfigError("need 2 <= views_min <= views_max");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(distance_min > 0.0) || distance_max < distance_min) {
    throw ConfigError("need 0 < distance_min <= distance_max");
  }
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (landmarks < 8) throw ConfigError("landmarks must be >= 8");
}

EpisodeOptions DataConfig::episode_options() const {
  return {noise_sigma, distance_min, distance_max};
}

ObjectOptions DataConfig::object_options() const {
  ObjectOptions o;
  o.landmarks = landmarks;
  o.feature_dim = feature_dim;
  return o;
}

EpisodeSampler::EpisodeSampler(DataConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      catalog_(cfg_.catalog_seed, cfg_.symmetry_orders, cfg_.object_options()) {}

Episode EpisodeSampler::sample(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> nv(cfg_.views_min, cfg_.views_max);
  std::uniform_int_distribution<std::size_t> ord(0, cfg_.symmetry_orders.size() - 1);
  const std::size_t n = nv(rng);
  const int order = cfg_.symmetry_orders[ord(rng)];
  return sample(rng, n, order);
}

Episode EpisodeSampler::sample(Rng& rng, std::size_t n_views, int order) const {
  return make_episode(n_views, catalog_.get(order), catalog_.seed_for(order), rng,
                      cfg_.episode_options());
}

WorldScene EpisodeSampler::sample_scene(Rng& rng, std::size_t n_views, int order) const {
  return make_world_scene(n_views, catalog_.get(order), catalog_.seed_for(order), rng,
                          cfg_.episode_options());
}

Vec3 EpisodeSampler::sample_translation(Rng& rng) const {
  std::uniform_real_distribution<double> dist(cfg_.distance_min, cfg_.distance_max);
  const double di = dist(rng);
  const double d0 = dist(rng);
  return {0.0, 0.0, di / d0};
}

}  // namespace aden
