#include "puppetrack/geom.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "puppetrack/error.hpp"

namespace puppetrack {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 rotation_between(const Vec3& a, const Vec3& b) {
  const double c = a.dot(b);
  if (1.0 + c < kAntiparallelEpsilon) {
    throw Error(ErrorKind::kAntiparallelAxes, "bone axes are antiparallel");
  }
  const Vec3 v = a.cross(b);
  const Mat3 vx = skew(v);
  // (1 - c) / s^2 == 1 / (1 + c) for unit inputs; the right-hand form stays
  // finite as s -> 0 with c -> 1.
  return Mat3::Identity() + vx + vx * vx * (1.0 / (1.0 + c));
}

Mat3 rotation_between_or_flip(const Vec3& a, const Vec3& b) {
  if (1.0 + a.dot(b) >= kAntiparallelEpsilon) return rotation_between(a, b);
  // Half turn about any axis orthogonal to a.
  Vec3 axis = a.cross(Vec3::UnitX());
  if (axis.squaredNorm() < 1e-6) axis = a.cross(Vec3::UnitY());
  axis.normalize();
  return 2.0 * axis * axis.transpose() - Mat3::Identity();
}

Mat3 exp_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 wx = skew(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + wx + 0.5 * wx * wx;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * wx + b * wx * wx;
}

Vec3 log_so3(const Mat3& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (cos_theta > 1.0 - 1e-10) {
    return 0.5 * vee;
  }
  const double theta = std::acos(cos_theta);
  if (cos_theta > -0.99) {
    return (theta / (2.0 * std::sin(theta))) * vee;
  }
  // Near pi: recover the axis from the symmetric part.
  const Mat3 sym = 0.5 * (r + r.transpose()) - cos_theta * Mat3::Identity();
  int k = 0;
  sym.diagonal().maxCoeff(&k);
  Vec3 axis = sym.col(k) / std::sqrt(std::max(sym(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

bool is_rotation(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

Vec3 TransformBlend::apply_normal(const Vec3& n) const {
  Vec3 out = linear * n;
  const double len = out.norm();
  return len > 0.0 ? Vec3(out / len) : n;
}

}  // namespace puppetrack
