#pragma once

#include <filesystem>
#include <vector>

#include "puppetrack/correspond.hpp"
#include "puppetrack/geom.hpp"
#include "puppetrack/mesh.hpp"
#include "puppetrack/skeleton.hpp"
#include "puppetrack/spatial.hpp"

namespace puppetrack {

/// Vertices whose largest skinning weight falls below this are joint region.
inline constexpr double kJointRegionThreshold = 0.8;

/// Skinned template: a triangle mesh with per-vertex bone weights.
struct PuppetMesh {
  TriangleMesh mesh;
  std::vector<SkinWeights> weights;
  std::vector<int> part;            // bone id of max weight
  std::vector<bool> joint_region;   // max weight < threshold

  std::size_t vertex_count() const { return mesh.vertices.size(); }
  /// Recomputes part labels and joint-region flags from the weights.
  void update_labels(double joint_threshold = kJointRegionThreshold);
};

struct BodyProportions {
  std::vector<double> bone_radius;  // meters, one per bone
  int segments = 24;                // around each capsule
  int cap_rings = 6;                // per hemisphere
  double falloff_power = 8.0;       // weight ~ distance^-power
};

BodyProportions default_proportions(const SkeletonTopology& topology);

/// Capsule-per-bone humanoid at the topology's rest pose. Each capsule is a
/// closed surface; weights fall off with distance to every bone segment.
PuppetMesh generate_procedural_puppet(const SkeletonTopology& topology,
                                      const BodyProportions& proportions);

struct SkinnedSurface {
  std::vector<Point3> vertices;
  std::vector<Vec3> normals;
};

/// Linear-blend skinning of every vertex by the given per-bone transforms.
SkinnedSurface skin(const PuppetMesh& puppet, const std::vector<RigidTransform>& bone_transforms);

/// Per-vertex blended transform sum_j w_j T_j.
TransformBlend blended_transform(const SkinWeights& weights,
                                 const std::vector<RigidTransform>& bone_transforms);

/// Puppet posed for one frame. Bone transforms map the reference puppet onto
/// the frame.
struct AlignedPuppet {
  std::vector<RigidTransform> bone_transforms;
  std::vector<Point3> vertices;
  std::vector<Vec3> normals;
  int frame = 0;

  static AlignedPuppet rest(const PuppetMesh& puppet, int bone_count, int frame = 0);
};

struct AlignConfig {
  int icp_iterations = 3;
  AssociationThresholds thresholds;
  /// Weight of each observed bone endpoint relative to one surface pair,
  /// scaled by the part's pair count.
  double joint_weight = 10.0;
};

struct AlignReport {
  /// Point-to-plane RMS over each iteration's inliers, before and after its update.
  std::vector<double> rms_before;
  std::vector<double> rms_after;
  std::vector<int> inliers;
  /// Bones whose initialization was inherited from the parent part.
  std::vector<int> inherited_bones;
};

/// Skeleton-driven initialization followed by per-part rigid point-to-plane
/// ICP. Each bone starts at bone_rigid_transform(prev -> curr) composed with
/// its previous transform; bones with unobserved joints inherit the parent
/// part's initialization. ICP keeps each part's endpoints near their observed
/// joints. RMS values in the report are over surface pairs only.
AlignedPuppet align_to_frame(const SkeletonTopology& topology, const PuppetMesh& puppet, const AlignedPuppet& previous,
                             const JointObservation& prev_joints,
                             const JointObservation& curr_joints, const TargetCloud& cloud,
                             const Intrinsics& intrinsics, const AlignConfig& config = {},
                             AlignReport* report = nullptr);

inline constexpr int kPuppetWarpNeighbors = 4;

/// Warp field imposed by a posed puppet: at x, the Gaussian-weighted blend of
/// the per-vertex transforms T_k = sum_j w_j T_j of the nearest reference
/// vertices. Reference vertices are the surface positions x is expressed in.
class PuppetWarpField {
 public:
  PuppetWarpField(const PuppetMesh& puppet, std::vector<Point3> reference_vertices,
                  std::vector<RigidTransform> bone_transforms,
                  int neighbors = kPuppetWarpNeighbors);

  /// Field from the rest puppet to an aligned puppet.
  static PuppetWarpField from_rest(const PuppetMesh& rest, const AlignedPuppet& aligned);
  /// Frame-to-frame field from `previous` to `current`, both aligned
  /// relative to the same rest puppet.
  static PuppetWarpField between(const PuppetMesh& rest, const AlignedPuppet& previous,
                                 const AlignedPuppet& current);

  /// Raw linear blend (points are warped with this).
  TransformBlend blend(const Point3& x) const;
  /// Blend with its linear part projected onto the rotations.
  RigidTransform operator()(const Point3& x) const { return blend(x).rigid(); }

  /// Normalized weights of the neighbors of x (for inspection and tests).
  std::vector<Neighbor> weights(const Point3& x) const;

  double sigma() const { return sigma_; }

 private:
  KdTree index_;
  std::vector<TransformBlend> vertex_transforms_;
  int neighbors_;
  double sigma_;
};

/// Puppet persisted as an OBJ plus a CSV weights table (vertex,bone,weight).
void save_puppet(const std::filesystem::path& obj_path, const std::filesystem::path& weights_path,
                 const PuppetMesh& puppet);
PuppetMesh load_puppet(const std::filesystem::path& obj_path,
                       const std::filesystem::path& weights_path);

}  // namespace puppetrack
