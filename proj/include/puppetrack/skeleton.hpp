#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "puppetrack/geom.hpp"

namespace puppetrack {

inline constexpr double kMinBoneLength = 1e-4;  // meters

struct JointSpec {
  std::string name;
  int parent = -1;            // -1 for the root
  Vec3 rest_offset = Vec3::Zero();  // relative to the parent's rest position
};

/// A bone rides on its head joint's frame; `tail` is the distal joint.
struct Bone {
  std::string name;
  int head = 0;
  int tail = 0;
  int part = 0;
};

/// Kinematic chain. Joints are topologically sorted (parent < child) and the
/// root is joint 0.
class SkeletonTopology {
 public:
  SkeletonTopology() = default;
  SkeletonTopology(std::vector<JointSpec> joints, std::vector<Bone> bones);

  int joint_count() const { return static_cast<int>(joints_.size()); }
  int bone_count() const { return static_cast<int>(bones_.size()); }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const std::vector<Bone>& bones() const { return bones_; }
  const JointSpec& joint(int j) const { return joints_[j]; }
  const Bone& bone(int b) const { return bones_[b]; }
  const std::vector<Point3>& rest_positions() const { return rest_positions_; }

  int find_joint(const std::string& name) const;
  int find_bone(const std::string& name) const;
  /// Bone whose tail is `bone`'s head, or -1.
  int parent_bone(int bone) const { return parent_bone_[bone]; }
  bool is_ancestor_or_self(int ancestor, int joint) const;

  /// Pose parameter count: 6 for the root plus 3 per non-root joint.
  int parameter_count() const { return 6 + 3 * (joint_count() - 1); }

  /// Same chain with rest offsets chosen to reproduce `positions`.
  SkeletonTopology with_rest_positions(const std::vector<Point3>& positions) const;

 private:
  std::vector<JointSpec> joints_;
  std::vector<Bone> bones_;
  std::vector<Point3> rest_positions_;
  std::vector<int> parent_bone_;
};

/// 16-joint / 15-bone humanoid: hips root; spine, neck, head; per side a
/// shoulder, elbow, wrist, hip, knee and ankle. Model frame has x to the
/// subject's left, y down, z away from the camera, hips at the origin.
SkeletonTopology default_topology();

/// Per-frame joint detections (camera frame, meters).
struct JointObservation {
  std::vector<Point3> positions;
  std::vector<bool> valid;

  static JointObservation all_valid(std::vector<Point3> positions);
  bool is_valid(int j) const { return j < static_cast<int>(valid.size()) && valid[j]; }
};

/// Root carries a full rigid transform, every other joint a rotation vector
/// (radians). rotations[0] is unused and kept at zero.
struct Pose {
  RigidTransform root;
  std::vector<Vec3> rotations;

  static Pose zero(const SkeletonTopology& topology);
};

/// Rigid map taking the previous bone onto the current one: rotation from the
/// closed-form axis alignment, translation mapping midpoint onto midpoint.
/// Throws kDegenerateBone for bones shorter than kMinBoneLength. Antiparallel
/// axes fall back to a half turn.
RigidTransform bone_rigid_transform(const Point3& prev_head, const Point3& prev_tail,
                                    const Point3& curr_head, const Point3& curr_tail);

/// Observation-level overload; throws kMissingJoint for invalid joints.
RigidTransform bone_rigid_transform(const SkeletonTopology& topology, int bone,
                                    const JointObservation& prev, const JointObservation& curr);

struct Kinematics {
  /// Rest-to-posed transform of each joint's frame.
  std::vector<RigidTransform> joint_transforms;
  std::vector<Point3> joint_positions;

  /// Transform carried by a bone: that of its head joint.
  const RigidTransform& bone_transform(const SkeletonTopology& topology, int bone) const {
    return joint_transforms[topology.bone(bone).head];
  }
  std::vector<RigidTransform> bone_transforms(const SkeletonTopology& topology) const;
};

Kinematics forward_kinematics(const SkeletonTopology& topology, const Pose& pose);

/// Sparse bone weights of a skinned point.
struct BoneWeight {
  int bone = 0;
  double weight = 0.0;
};
using SkinWeights = std::vector<BoneWeight>;

/// Linear-blend-skinned position and raw blended normal direction.
Point3 skin_point(const SkeletonTopology& topology, const Kinematics& kin,
                  const SkinWeights& weights, const Point3& rest);
Vec3 skin_direction(const SkeletonTopology& topology, const Kinematics& kin,
                    const SkinWeights& weights, const Vec3& rest);

/// Applies a pose increment: delta = [root translation, root rotation about
/// the posed root joint, world-frame rotation per non-root joint].
Pose apply_pose_increment(const SkeletonTopology& topology, const Pose& pose,
                          const Kinematics& kin, const Eigen::VectorXd& delta);

/// d(skinned point)/d(pose increment) at zero increment, 3 x parameter_count.
Eigen::MatrixXd skinned_point_jacobian(const SkeletonTopology& topology, const Kinematics& kin,
                                       const SkinWeights& weights, const Point3& rest);
/// Same for the raw blended direction sum_b w_b R_b n.
Eigen::MatrixXd skinned_direction_jacobian(const SkeletonTopology& topology,
                                           const Kinematics& kin, const SkinWeights& weights,
                                           const Vec3& rest);

/// Stacked (3 n) x parameter_count Jacobian for several probe points.
Eigen::MatrixXd pose_increment_jacobian(const SkeletonTopology& topology, const Pose& pose,
                                        const std::vector<Point3>& probes,
                                        const std::vector<SkinWeights>& weights);

/// Kinematic pose whose joint frames follow per-bone rigid transforms. Each
/// joint takes the rotation of its first child bone; joints without child
/// bones keep their parent's frame.
Pose pose_from_bone_transforms(const SkeletonTopology& topology,
                               const std::vector<RigidTransform>& bone_transforms);

}  // namespace puppetrack
