#pragma once

#include <cstdint>
#include <vector>

#include "puppetrack/geom.hpp"
#include "puppetrack/spatial.hpp"

namespace puppetrack {

struct PuppetMesh;
struct AlignedPuppet;

/// Pinhole intrinsics; pixel (u, v) has its center at integer coordinates.
struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height;
  }
  /// Throws kBadIntrinsics unless valid().
  void validate() const;

  /// Nearest pixel of a camera-frame point, or false when it falls outside
  /// the image or behind the camera.
  bool project(const Point3& p, int& u, int& v) const;
};

/// Depth in meters, row-major; 0 marks a missing measurement.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> meters;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), meters(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(int u, int v) const { return meters[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return meters[static_cast<std::size_t>(v) * width + u]; }

  static DepthImage from_millimeters(int w, int h, const std::vector<std::uint16_t>& mm);
  std::vector<std::uint16_t> to_millimeters() const;
};

/// Organized point cloud from one depth image.
struct TargetCloud {
  int width = 0, height = 0;
  std::vector<Point3> points;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> valid;

  bool is_valid(int u, int v) const { return valid[static_cast<std::size_t>(v) * width + u] != 0; }
  const Point3& point(int u, int v) const { return points[static_cast<std::size_t>(v) * width + u]; }
  const Vec3& normal(int u, int v) const { return normals[static_cast<std::size_t>(v) * width + u]; }
  std::size_t valid_count() const;
  std::vector<Point3> valid_points() const;
};

/// Pixel -> ((u - cx) d / fx, (v - cy) d / fy, d). Normals from central
/// differences, oriented toward the camera; pixels without a full
/// neighborhood are dropped.
TargetCloud backproject(const DepthImage& depth, const Intrinsics& intrinsics);

struct AssociationThresholds {
  double max_distance = 0.05;         // meters
  double max_normal_angle_deg = 45.0;
};

struct Correspondence {
  int source = 0;  // index of the source point
  Point3 target = Point3::Zero();
  Vec3 target_normal = Vec3::UnitZ();
  double weight = 1.0;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Projects every source point into the image and pairs it with that pixel's
/// point when the gap and normal angle pass the thresholds. Output is in
/// source order.
CorrespondenceSet projective_associate(const std::vector<Point3>& points,
                                       const std::vector<Vec3>& normals, const TargetCloud& cloud,
                                       const Intrinsics& intrinsics,
                                       const AssociationThresholds& thresholds = {});

/// Pairs reconstruction vertices with the cloud through the puppet: nearest
/// rest-puppet vertex, skip joint regions, then associate its aligned twin
/// projectively. `rest_index` indexes the rest puppet's vertices. Throws
/// kNoCorrespondences when nothing survives.
CorrespondenceSet puppet_mediated_correspondences(const std::vector<Point3>& recon_vertices,
                                                  const PuppetMesh& rest_puppet,
                                                  const KdTree& rest_index,
                                                  const AlignedPuppet& aligned,
                                                  const TargetCloud& cloud,
                                                  const Intrinsics& intrinsics,
                                                  const AssociationThresholds& thresholds = {});

bool passes_thresholds(const Point3& source, const Vec3& source_normal, const Point3& target,
                       const Vec3& target_normal, const AssociationThresholds& thresholds);

}  // namespace puppetrack
