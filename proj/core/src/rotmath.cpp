#include "aden/rotmath.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "aden/errors.hpp"

namespace aden {

Vec4 canonical_sign(const Vec4& q) {
  for (int i = 0; i < 4; ++i) {
    if (q[i] > 0.0) return q;
    if (q[i] < 0.0) return -q;
  }
  return q;
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  Vec4 q(w, x, y, z);
  const double n = q.norm();
  if (!std::isfinite(n) || n < 1e-300) {
    throw NotARotation("quaternion has zero or non-finite norm");
  }
  // Leave already-unit input untouched so that decoding is idempotent.
  if (std::abs(n - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q /= n;
  return Rotation(canonical_sign(q));
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw NotARotation("axis must be nonzero");
  const Vec3 u = axis / n;
  const double s = std::sin(0.5 * angle);
  return from_quaternion(std::cos(0.5 * angle), s * u.x(), s * u.y(), s * u.z());
}

Mat3 Rotation::matrix() const { return quat_to_matrix(*this); }

Rotation Rotation::inverse() const {
  return Rotation(canonical_sign(Vec4(q_[0], -q_[1], -q_[2], -q_[3])));
}

Vec4 unit_quaternion_or_identity(const Vec4& q) {
  const double n = q.norm();
  if (!(n >= kMinQuaternionNorm)) return Vec4(1.0, 0.0, 0.0, 0.0);
  return q / n;
}

Rotation operator*(const Rotation& a, const Rotation& b) {
  const Vec4& p = a.q_;
  const Vec4& q = b.q_;
  Vec4 r(p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
         p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
         p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
         p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]);
  return Rotation::from_quaternion(r);
}

Mat3 quat_to_matrix(const Rotation& r) {
  const double w = r.w(), x = r.x(), y = r.y(), z = r.z();
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

Rotation matrix_to_quat(const Mat3& m) {
  if (!m.allFinite()) throw NotARotation("matrix has non-finite entries");
  const double orth_err = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth_err > 1e-6) throw NotARotation("matrix is not orthonormal");
  if (!(m.determinant() > 0.0)) throw NotARotation("matrix has non-positive determinant");

  // Shepperd: pivot on the largest of (trace, diagonal) for stability.
  const double tr = m.trace();
  Vec4 q;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q << 0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    q << (m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s;
  }
  return Rotation::from_quaternion(q);
}

double geodesic_distance(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  // cos from the trace, sin from the skew part; atan2 keeps full precision
  // near 0 and pi where arccos of the trace alone loses half the digits.
  const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
  const Vec3 vee(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double s = 0.5 * vee.norm();
  return std::atan2(s, c);
}

double geodesic_distance(const Rotation& a, const Rotation& b) {
  return geodesic_distance(a.matrix(), b.matrix());
}

double pose_distance(const Pose& a, const Pose& b, double lambda) {
  return geodesic_distance(a.rotation, b.rotation) +
         lambda * (a.translation - b.translation).norm();
}

Rotation random_rotation(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    const double w = n01(rng), x = n01(rng), y = n01(rng), z = n01(rng);
    if (w * w + x * x + y * y + z * z > 1e-12) return Rotation::from_quaternion(w, x, y, z);
  }
}

std::vector<Rotation> so3_sample_grid(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Rotation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_rotation(rng));
  return out;
}

Pose relative_pose(const Pose& a, const Pose& b) {
  const Rotation r = b.rotation * a.rotation.inverse();
  return {r, b.translation - r.matrix() * a.translation};
}

Pose compose(const Pose& a, const Pose& rel) {
  return {rel.rotation * a.rotation, rel.rotation.matrix() * a.translation + rel.translation};
}

Vec3 camera_center(const Pose& p) { return -(p.rotation.matrix().transpose() * p.translation); }

SceneSet canonicalize_scene(const SceneSet& scene, const Vec3& object_center) {
  if (scene.poses.empty()) throw DegenerateScene("scene has no poses");
  const Pose& ref = scene.poses.front();
  const Mat3 r0 = ref.rotation.matrix();
  const Vec3 center_in_ref = r0 * object_center + ref.translation;
  const double s = center_in_ref.norm();
  if (!(s >= 1e-9)) throw DegenerateScene("reference camera coincides with object center");

  const Vec3 ez(0.0, 0.0, 1.0);
  const Rotation r0_inv = ref.rotation.inverse();
  SceneSet out;
  out.scale = scene.scale * s;
  out.object_center = center_in_ref / s - ez;
  out.poses.reserve(scene.poses.size());
  out.poses.push_back({Rotation::identity(), ez});
  for (std::size_t i = 1; i < scene.poses.size(); ++i) {
    const Pose& p = scene.poses[i];
    const Rotation r = p.rotation * r0_inv;
    const Mat3 rm = r.matrix();
    out.poses.push_back({r, (p.translation - rm * ref.translation) / s + rm * ez});
  }
  return out;
}

SceneSet canonicalize_scene(const SceneSet& scene) {
  return canonicalize_scene(scene, scene.object_center);
}

}  // namespace aden
