#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "puppetrack/correspond.hpp"
#include "puppetrack/defgraph.hpp"
#include "puppetrack/mesh.hpp"

namespace puppetrack {

struct VolumeConfig {
  double voxel_size = 0.01;        // meters
  double truncation_voxels = 4.0;  // mu in voxels
  float max_weight = 64.0f;
  double margin = 0.2;  // fraction of the box extent added on every side
};

/// Canonical-space TSDF. Values are distance / mu clamped to [-1, 1];
/// unobserved voxels hold value 1 and weight 0.
class TsdfVolume {
 public:
  TsdfVolume() = default;
  TsdfVolume(const Point3& origin, double voxel_size, std::array<int, 3> dims, double truncation,
             float max_weight);

  /// Box grown by the configured margin (at least two truncation widths).
  static TsdfVolume enclosing(const Aabb& box, const VolumeConfig& config);

  const Point3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const std::array<int, 3>& dims() const { return dims_; }
  double truncation() const { return truncation_; }
  float max_weight() const { return max_weight_; }
  std::size_t voxel_count() const { return values_.size(); }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
  }
  std::array<int, 3> coords(std::size_t idx) const;
  Point3 center(int i, int j, int k) const {
    return origin_ + voxel_size_ * Vec3(i, j, k);
  }
  Point3 center(std::size_t idx) const;

  float value(std::size_t idx) const { return values_[idx]; }
  float weight(std::size_t idx) const { return weights_[idx]; }
  const std::vector<float>& values() const { return values_; }
  const std::vector<float>& weights() const { return weights_; }

  /// Folds one signed-distance sample (meters) into the running average with
  /// unit weight. Samples more than mu behind the surface are ignored.
  bool integrate_sample(std::size_t idx, double sdf);
  void set(std::size_t idx, float value, float weight);

 private:
  Point3 origin_ = Point3::Zero();
  double voxel_size_ = 0.01;
  std::array<int, 3> dims_{0, 0, 0};
  double truncation_ = 0.04;
  float max_weight_ = 64.0f;
  std::vector<float> values_;
  std::vector<float> weights_;
};

/// Graph influences of the voxels within reach of a node.
struct VoxelInfluenceCache {
  struct Entry {
    std::array<std::int32_t, kMaxWarpNeighbors> node;  // -1 past the last
    std::array<float, kMaxWarpNeighbors> weight;
  };
  std::vector<std::uint32_t> voxels;
  std::vector<Entry> entries;
  int node_count = 0;
};

VoxelInfluenceCache cache_voxel_influences(const TsdfVolume& volume, const DeformationGraph& graph);

/// Identity warp: voxel centers are already in camera space.
void integrate_frame(TsdfVolume& volume, const DepthImage& depth, const Intrinsics& intrinsics);

/// Voxel centers are carried to camera space by the graph warp, projected,
/// and updated with d = pixel depth - warped depth. Voxels out of reach of the
/// graph are skipped. A stale or missing cache is rebuilt.
void integrate_frame(TsdfVolume& volume, const DepthImage& depth, const Intrinsics& intrinsics,
                     const DeformationGraph& graph, const VoxelInfluenceCache* cache = nullptr);

/// Zero-isosurface of the observed voxels (marching tetrahedra over the six
/// tetrahedra of each cell, vertices shared along grid edges). Normals come
/// from the TSDF gradient. Throws kEmptySurface when nothing crosses zero.
TriangleMesh extract_mesh(const TsdfVolume& volume);

}  // namespace puppetrack
