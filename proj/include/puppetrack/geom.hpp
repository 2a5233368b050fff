#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace puppetrack {

using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Threshold on (1 + a.b) below which two unit axes are treated as
/// antiparallel and the closed-form rotation is undefined.
inline constexpr double kAntiparallelEpsilon = 1e-8;

/// Rigid map x -> R x + t. Points use the full map, directions the rotation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform rotate(const Mat3& r) { return {r, Vec3::Zero()}; }
  /// Rotation by `r` about the fixed point `center`.
  static RigidTransform rotate_about(const Mat3& r, const Point3& center) {
    return {r, center - r * center};
  }

  Point3 apply(const Point3& x) const { return rotation * x + translation; }
  Vec3 apply_normal(const Vec3& n) const { return rotation * n; }
  Point3 operator()(const Point3& x) const { return apply(x); }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

/// compose(a, b)(x) == a(b(x)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

Mat3 skew(const Vec3& v);

/// Closed-form rotation taking unit vector `a` onto unit vector `b`:
///   R = I + [v]x + [v]x^2 (1 - c) / s^2,  v = a x b, c = a.b, s = |v|.
/// Throws Error(kAntiparallelAxes) when 1 + a.b < kAntiparallelEpsilon.
/// For parallel inputs (s == 0, c == 1) the limit value I is returned.
Mat3 rotation_between(const Vec3& a, const Vec3& b);

/// rotation_between with the antiparallel case replaced by a half turn about
/// an axis orthogonal to `a`.
Mat3 rotation_between_or_flip(const Vec3& a, const Vec3& b);

/// Signed point-to-plane distance n_q . (p - q).
inline double point_to_plane(const Point3& p, const Point3& q, const Vec3& n_q) {
  return n_q.dot(p - q);
}

/// Rodrigues map from a rotation vector (radians) to a rotation matrix.
Mat3 exp_so3(const Vec3& w);
/// Inverse of exp_so3 on rotations with angle in [0, pi].
Vec3 log_so3(const Mat3& r);

/// Closest rotation (Frobenius) to an arbitrary 3x3 matrix.
Mat3 nearest_rotation(const Mat3& m);

bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Accumulator for linear blends sum_k w_k T_k of rigid transforms. The
/// linear part is generally not orthonormal; rigid() projects it.
struct TransformBlend {
  Mat3 linear = Mat3::Zero();
  Vec3 translation = Vec3::Zero();

  void add(double w, const RigidTransform& t) {
    linear += w * t.rotation;
    translation += w * t.translation;
  }
  void add(double w, const TransformBlend& b) {
    linear += w * b.linear;
    translation += w * b.translation;
  }

  Point3 apply(const Point3& x) const { return linear * x + translation; }
  /// Blended normal, re-normalized.
  Vec3 apply_normal(const Vec3& n) const;

  RigidTransform rigid() const { return {nearest_rotation(linear), translation}; }
};

}  // namespace puppetrack
