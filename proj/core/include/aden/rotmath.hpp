#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace aden {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Deterministic RNG used everywhere. State is always owned by the caller.
using Rng = std::mt19937_64;

/// Unit quaternion (w, x, y, z) in canonical sign form.
///
/// The double cover is resolved so that w >= 0, and when w == 0 the first
/// nonzero of (x, y, z) is positive. Two rotations compare equal iff their
/// stored quaternions are identical.
class Rotation {
public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

  /// Normalizes and canonicalizes. Throws NotARotation on a zero or
  /// non-finite input.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_quaternion(const Vec4& q) {
    return from_quaternion(q[0], q[1], q[2], q[3]);
  }
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  static Rotation identity() { return {}; }

  const Vec4& quaternion() const { return q_; }
  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }

  Mat3 matrix() const;
  Rotation inverse() const;
  Vec3 rotate(const Vec3& v) const { return matrix() * v; }

  /// Composition: (a * b).matrix() == a.matrix() * b.matrix().
  friend Rotation operator*(const Rotation& a, const Rotation& b);
  friend bool operator==(const Rotation& a, const Rotation& b) { return a.q_ == b.q_; }

private:
  explicit Rotation(const Vec4& q) : q_(q) {}
  Vec4 q_;
};

/// Raw quaternions shorter than this decode to the identity.
inline constexpr double kMinQuaternionNorm = 1e-12;

/// q / |q|, or the identity quaternion when |q| < kMinQuaternionNorm.
Vec4 unit_quaternion_or_identity(const Vec4& q);

/// Sign-canonical form of a (not necessarily unit) quaternion, without
/// normalization.
Vec4 canonical_sign(const Vec4& q);

struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
};

/// An ordered set of camera poses. Index 0 is the reference frame.
struct SceneSet {
  std::vector<Pose> poses;
  /// Divisor applied to translations by canonicalize_scene (1 if untouched).
  double scale = 1.0;
  /// Object center expressed in the same frame as the poses.
  Vec3 object_center = Vec3::Zero();
};

Mat3 quat_to_matrix(const Rotation& r);

/// Throws NotARotation unless M^T M = I within 1e-6 and det M > 0.
Rotation matrix_to_quat(const Mat3& m);

/// Angle of A^T B in [0, pi].
double geodesic_distance(const Rotation& a, const Rotation& b);
double geodesic_distance(const Mat3& a, const Mat3& b);

/// Geodesic rotation distance plus lambda times the translation distance.
double pose_distance(const Pose& a, const Pose& b, double lambda = 1.0);

/// Haar-uniform rotation: normalized 4D standard Gaussian.
Rotation random_rotation(Rng& rng);

/// n i.i.d. Haar samples drawn from a fresh generator seeded with `seed`.
std::vector<Rotation> so3_sample_grid(std::size_t n, std::uint64_t seed);

/// Pose of b expressed relative to a: R = R_b R_a^T, t = t_b - R t_a.
Pose relative_pose(const Pose& a, const Pose& b);

/// Inverse of relative_pose: compose(a, relative_pose(a, b)) == b.
Pose compose(const Pose& a, const Pose& rel);

/// Camera center -R^T t of a world-to-camera pose.
Vec3 camera_center(const Pose& p);

/// Re-expresses the scene so that pose 0 becomes (I, (0, 0, 1)) and every
/// translation is divided by the distance from camera 0 to `object_center`.
/// Throws DegenerateScene when that distance is below 1e-9.
SceneSet canonicalize_scene(const SceneSet& scene, const Vec3& object_center);

/// Convenience overload using scene.object_center.
SceneSet canonicalize_scene(const SceneSet& scene);

inline double rad_to_deg(double r) { return r * 180.0 / 3.14159265358979323846; }
inline double deg_to_rad(double d) { return d * 3.14159265358979323846 / 180.0; }

}  // namespace aden
