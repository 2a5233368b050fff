#include "puppetrack/correspond.hpp"

#include <cmath>
#include <numbers>

#include "puppetrack/error.hpp"
#include "puppetrack/puppet.hpp"

namespace puppetrack {

namespace {

// Neighbors farther apart than this in depth do not share a surface.
constexpr double kDepthDiscontinuity = 0.05;

}  // namespace

void Intrinsics::validate() const {
  if (!valid()) throw Error(ErrorKind::kBadIntrinsics, "focal lengths must be positive and the principal point inside the image");
}

bool Intrinsics::project(const Point3& p, int& u, int& v) const {
  if (!(p.z() > 0.0)) return false;
  const double fu = fx * p.x() / p.z() + cx;
  const double fv = fy * p.y() / p.z() + cy;
  u = static_cast<int>(std::lround(fu));
  v = static_cast<int>(std::lround(fv));
  return u >= 0 && u < width && v >= 0 && v < height;
}

DepthImage DepthImage::from_millimeters(int w, int h, const std::vector<std::uint16_t>& mm) {
  DepthImage img(w, h);
  for (std::size_t i = 0; i < img.meters.size(); ++i) img.meters[i] = static_cast<float>(mm[i] * 1e-3);
  return img;
}

std::vector<std::uint16_t> DepthImage::to_millimeters() const {
  std::vector<std::uint16_t> mm(meters.size());
  for (std::size_t i = 0; i < meters.size(); ++i) {
    const double v = std::lround(static_cast<double>(meters[i]) * 1000.0);
    mm[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  return mm;
}

std::size_t TargetCloud::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v;
  return n;
}

std::vector<Point3> TargetCloud::valid_points() const {
  std::vector<Point3> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (valid[i]) out.push_back(points[i]);
  }
  return out;
}

TargetCloud backproject(const DepthImage& depth, const Intrinsics& intrinsics) {
  intrinsics.validate();
  if (depth.width != intrinsics.width || depth.height != intrinsics.height) {
    throw Error(ErrorKind::kBadIntrinsics, "depth image size does not match intrinsics");
  }
  const int w = depth.width, h = depth.height;
  TargetCloud cloud;
  cloud.width = w;
  cloud.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  cloud.points.assign(n, Point3::Zero());
  cloud.normals.assign(n, Vec3::Zero());
  cloud.valid.assign(n, 0);
  std::vector<std::uint8_t> has_depth(n, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = depth.at(u, v);
      if (!(d > 0.0)) continue;
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      cloud.points[i] = {(u - intrinsics.cx) * d / intrinsics.fx, (v - intrinsics.cy) * d / intrinsics.fy, d};
      has_depth[i] = 1;
    }
  }
  auto usable = [&](int u, int v, double d) {
    if (u < 0 || u >= w || v < 0 || v >= h) return false;
    const std::size_t i = static_cast<std::size_t>(v) * w + u;
    return has_depth[i] && std::abs(cloud.points[i].z() - d) < kDepthDiscontinuity;
  };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      if (!has_depth[i]) continue;
      const Point3& p = cloud.points[i];
      const double d = p.z();
      if (!usable(u - 1, v, d) || !usable(u + 1, v, d) || !usable(u, v - 1, d) || !usable(u, v + 1, d)) continue;
      const Vec3 du = cloud.point(u + 1, v) - cloud.point(u - 1, v);
      const Vec3 dv = cloud.point(u, v + 1) - cloud.point(u, v - 1);
      Vec3 nrm = du.cross(dv);
      const double len = nrm.norm();
      if (!(len > 0.0)) continue;
      nrm /= len;
      if (nrm.dot(p) > 0.0) nrm = -nrm;
      cloud.normals[i] = nrm;
      cloud.valid[i] = 1;
    }
  }
  return cloud;
}

bool passes_thresholds(const Point3& source, const Vec3& source_normal, const Point3& target,
                       const Vec3& target_normal, const AssociationThresholds& thresholds) {
  if (!((source - target).norm() < thresholds.max_distance)) return false;
  const double cos_limit = std::cos(thresholds.max_normal_angle_deg * std::numbers::pi / 180.0);
  return source_normal.dot(target_normal) > cos_limit;
}

CorrespondenceSet projective_associate(const std::vector<Point3>& points,
                                       const std::vector<Vec3>& normals, const TargetCloud& cloud,
                                       const Intrinsics& intrinsics,
                                       const AssociationThresholds& thresholds) {
  CorrespondenceSet out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    int u = 0, v = 0;
    if (!intrinsics.project(points[i], u, v) || !cloud.is_valid(u, v)) continue;
    const Point3& q = cloud.point(u, v);
    const Vec3& nq = cloud.normal(u, v);
    if (!passes_thresholds(points[i], normals[i], q, nq, thresholds)) continue;
    out.push_back({static_cast<int>(i), q, nq, 1.0});
  }
  return out;
}

CorrespondenceSet puppet_mediated_correspondences(const std::vector<Point3>& recon_vertices,
                                                  const PuppetMesh& rest_puppet,
                                                  const KdTree& rest_index,
                                                  const AlignedPuppet& aligned,
                                                  const TargetCloud& cloud,
                                                  const Intrinsics& intrinsics,
                                                  const AssociationThresholds& thresholds) {
  CorrespondenceSet out;
  const double max_hop2 = thresholds.max_distance * thresholds.max_distance;
  for (std::size_t i = 0; i < recon_vertices.size(); ++i) {
    const Neighbor nn = rest_index.nearest(recon_vertices[i]);
    if (nn.index < 0 || nn.distance2 >= max_hop2) continue;
    if (rest_puppet.joint_region[nn.index]) continue;
    const Point3& twin = aligned.vertices[nn.index];
    const Vec3& twin_normal = aligned.normals[nn.index];
    int u = 0, v = 0;
    if (!intrinsics.project(twin, u, v) || !cloud.is_valid(u, v)) continue;
    const Point3& q = cloud.point(u, v);
    const Vec3& nq = cloud.normal(u, v);
    if (!passes_thresholds(twin, twin_normal, q, nq, thresholds)) continue;
    out.push_back({static_cast<int>(i), q, nq, 1.0});
  }
  if (out.empty()) {
    throw Error(ErrorKind::kNoCorrespondences, "puppet-mediated association produced no pairs");
  }
  return out;
}

}  // namespace puppetrack
