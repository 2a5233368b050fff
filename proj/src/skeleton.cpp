#include "puppetrack/skeleton.hpp"

#include "puppetrack/error.hpp"

namespace puppetrack {

SkeletonTopology::SkeletonTopology(std::vector<JointSpec> joints, std::vector<Bone> bones)
    : joints_(std::move(joints)), bones_(std::move(bones)) {
  if (joints_.empty()) throw Error(ErrorKind::kInvalidArgument, "topology has no joints");
  if (joints_[0].parent != -1) throw Error(ErrorKind::kInvalidArgument, "joint 0 must be the root");
  rest_positions_.resize(joints_.size());
  for (int j = 0; j < joint_count(); ++j) {
    const int p = joints_[j].parent;
    if (j > 0 && (p < 0 || p >= j)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "joint '" + joints_[j].name + "' must have a parent with a lower index");
    }
    rest_positions_[j] = (p < 0 ? Vec3::Zero() : rest_positions_[p]) + joints_[j].rest_offset;
  }
  parent_bone_.assign(bones_.size(), -1);
  for (int b = 0; b < bone_count(); ++b) {
    const Bone& bone = bones_[b];
    if (bone.head < 0 || bone.head >= joint_count() || bone.tail < 0 || bone.tail >= joint_count()) {
      throw Error(ErrorKind::kInvalidArgument, "bone '" + bone.name + "' has invalid joint ids");
    }
    for (int o = 0; o < bone_count(); ++o) {
      if (bones_[o].tail == bone.head) {
        parent_bone_[b] = o;
        break;
      }
    }
  }
}

int SkeletonTopology::find_joint(const std::string& name) const {
  for (int j = 0; j < joint_count(); ++j) {
    if (joints_[j].name == name) return j;
  }
  return -1;
}

int SkeletonTopology::find_bone(const std::string& name) const {
  for (int b = 0; b < bone_count(); ++b) {
    if (bones_[b].name == name) return b;
  }
  return -1;
}

bool SkeletonTopology::is_ancestor_or_self(int ancestor, int joint) const {
  for (int j = joint; j >= 0; j = joints_[j].parent) {
    if (j == ancestor) return true;
  }
  return false;
}

SkeletonTopology SkeletonTopology::with_rest_positions(const std::vector<Point3>& positions) const {
  std::vector<JointSpec> joints = joints_;
  for (int j = 0; j < joint_count(); ++j) {
    const int p = joints[j].parent;
    joints[j].rest_offset = p < 0 ? positions[j] : Vec3(positions[j] - positions[p]);
  }
  return SkeletonTopology(std::move(joints), bones_);
}

SkeletonTopology default_topology() {
  // Rest pose is a T-pose; x points to the subject's left, y down.
  const double shoulder_x = 0.18, elbow_x = 0.46, wrist_x = 0.71, arm_y = -0.47;
  const double hip_x = 0.10;
  std::vector<JointSpec> joints = {
      {"hips", -1, {0.0, 0.0, 0.0}},
      {"spine", 0, {0.0, -0.22, 0.0}},
      {"neck", 1, {0.0, -0.28, 0.0}},
      {"head", 2, {0.0, -0.22, 0.0}},
      {"l_shoulder", 2, {shoulder_x, arm_y + 0.50, 0.0}},
      {"l_elbow", 4, {elbow_x - shoulder_x, 0.0, 0.0}},
      {"l_wrist", 5, {wrist_x - elbow_x, 0.0, 0.0}},
      {"r_shoulder", 2, {-shoulder_x, arm_y + 0.50, 0.0}},
      {"r_elbow", 7, {-(elbow_x - shoulder_x), 0.0, 0.0}},
      {"r_wrist", 8, {-(wrist_x - elbow_x), 0.0, 0.0}},
      {"l_hip", 0, {hip_x, 0.03, 0.0}},
      {"l_knee", 10, {0.0, 0.42, 0.0}},
      {"l_ankle", 11, {0.0, 0.42, 0.0}},
      {"r_hip", 0, {-hip_x, 0.03, 0.0}},
      {"r_knee", 13, {0.0, 0.42, 0.0}},
      {"r_ankle", 14, {0.0, 0.42, 0.0}},
  };
  std::vector<Bone> bones = {
      {"lower_spine", 0, 1, 0}, {"upper_spine", 1, 2, 1}, {"head", 2, 3, 2},
      {"l_clavicle", 2, 4, 3},  {"l_upper_arm", 4, 5, 4}, {"l_forearm", 5, 6, 5},
      {"r_clavicle", 2, 7, 6},  {"r_upper_arm", 7, 8, 7}, {"r_forearm", 8, 9, 8},
      {"l_pelvis", 0, 10, 9},   {"l_thigh", 10, 11, 10},  {"l_shin", 11, 12, 11},
      {"r_pelvis", 0, 13, 12},  {"r_thigh", 13, 14, 13},  {"r_shin", 14, 15, 14},
  };
  return SkeletonTopology(std::move(joints), std::move(bones));
}

JointObservation JointObservation::all_valid(std::vector<Point3> positions) {
  JointObservation obs;
  obs.valid.assign(positions.size(), true);
  obs.positions = std::move(positions);
  return obs;
}

Pose Pose::zero(const SkeletonTopology& topology) {
  Pose pose;
  pose.rotations.assign(topology.joint_count(), Vec3::Zero());
  return pose;
}

RigidTransform bone_rigid_transform(const Point3& prev_head, const Point3& prev_tail,
                                    const Point3& curr_head, const Point3& curr_tail) {
  const Vec3 prev_axis = prev_head - prev_tail;
  const Vec3 curr_axis = curr_head - curr_tail;
  if (prev_axis.norm() <= kMinBoneLength || curr_axis.norm() <= kMinBoneLength) {
    throw Error(ErrorKind::kDegenerateBone, "bone shorter than minimum length");
  }
  const Mat3 r = rotation_between_or_flip(prev_axis.normalized(), curr_axis.normalized());
  const Point3 c1 = 0.5 * (prev_head + prev_tail);
  const Point3 c2 = 0.5 * (curr_head + curr_tail);
  return {r, -(r * c1) + c2};
}

RigidTransform bone_rigid_transform(const SkeletonTopology& topology, int bone,
                                    const JointObservation& prev, const JointObservation& curr) {
  const Bone& b = topology.bone(bone);
  if (!prev.is_valid(b.head) || !prev.is_valid(b.tail) || !curr.is_valid(b.head) ||
      !curr.is_valid(b.tail)) {
    throw Error(ErrorKind::kMissingJoint, "bone '" + b.name + "' has an unobserved joint");
  }
  return bone_rigid_transform(prev.positions[b.head], prev.positions[b.tail],
                              curr.positions[b.head], curr.positions[b.tail]);
}

std::vector<RigidTransform> Kinematics::bone_transforms(const SkeletonTopology& topology) const {
  std::vector<RigidTransform> out(topology.bone_count());
  for (int b = 0; b < topology.bone_count(); ++b) out[b] = bone_transform(topology, b);
  return out;
}

Kinematics forward_kinematics(const SkeletonTopology& topology, const Pose& pose) {
  const int n = topology.joint_count();
  const auto& rest = topology.rest_positions();
  Kinematics kin;
  kin.joint_transforms.resize(n);
  kin.joint_positions.resize(n);
  kin.joint_transforms[0] = pose.root;
  kin.joint_positions[0] = pose.root.apply(rest[0]);
  for (int j = 1; j < n; ++j) {
    const RigidTransform& parent = kin.joint_transforms[topology.joint(j).parent];
    const RigidTransform local = RigidTransform::rotate_about(exp_so3(pose.rotations[j]), rest[j]);
    kin.joint_transforms[j] = compose(parent, local);
    kin.joint_positions[j] = parent.apply(rest[j]);
  }
  return kin;
}

Point3 skin_point(const SkeletonTopology& topology, const Kinematics& kin,
                  const SkinWeights& weights, const Point3& rest) {
  Point3 p = Point3::Zero();
  for (const auto& bw : weights) p += bw.weight * kin.bone_transform(topology, bw.bone).apply(rest);
  return p;
}

Vec3 skin_direction(const SkeletonTopology& topology, const Kinematics& kin,
                    const SkinWeights& weights, const Vec3& rest) {
  Vec3 n = Vec3::Zero();
  for (const auto& bw : weights) n += bw.weight * (kin.bone_transform(topology, bw.bone).rotation * rest);
  return n;
}

Pose apply_pose_increment(const SkeletonTopology& topology, const Pose& pose,
                          const Kinematics& kin, const Eigen::VectorXd& delta) {
  Pose out = pose;
  const Vec3 dt = delta.segment<3>(0);
  const Mat3 droot = exp_so3(delta.segment<3>(3));
  const Point3 pivot = kin.joint_positions[0];
  out.root.rotation = droot * pose.root.rotation;
  out.root.translation = pivot + droot * (pose.root.translation - pivot) + dt;
  for (int j = 1; j < topology.joint_count(); ++j) {
    const Vec3 dw = delta.segment<3>(6 + 3 * (j - 1));
    if (dw.isZero(0.0)) continue;
    const Mat3& parent_rot = kin.joint_transforms[topology.joint(j).parent].rotation;
    const Mat3 local = exp_so3(parent_rot.transpose() * dw) * exp_so3(pose.rotations[j]);
    out.rotations[j] = log_so3(local);
  }
  return out;
}

namespace {

// Sum of per-bone contributions `term(bone)` over bones moved by joint k.
template <typename Term>
Mat3 accumulate_affected(const SkeletonTopology& topology, const SkinWeights& weights, int joint,
                         Term term) {
  Mat3 acc = Mat3::Zero();
  for (const auto& bw : weights) {
    if (topology.is_ancestor_or_self(joint, topology.bone(bw.bone).head)) acc += bw.weight * term(bw.bone);
  }
  return acc;
}

}  // namespace

Eigen::MatrixXd skinned_point_jacobian(const SkeletonTopology& topology, const Kinematics& kin,
                                       const SkinWeights& weights, const Point3& rest) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, topology.parameter_count());
  double wsum = 0.0;
  Point3 p = Point3::Zero();
  for (const auto& bw : weights) {
    wsum += bw.weight;
    p += bw.weight * kin.bone_transform(topology, bw.bone).apply(rest);
  }
  jac.block<3, 3>(0, 0) = wsum * Mat3::Identity();
  jac.block<3, 3>(0, 3) = -skew(p - wsum * kin.joint_positions[0]);
  for (int k = 1; k < topology.joint_count(); ++k) {
    const Point3& pivot = kin.joint_positions[k];
    jac.block<3, 3>(0, 6 + 3 * (k - 1)) = accumulate_affected(topology, weights, k, [&](int b) {
      return Mat3(-skew(kin.bone_transform(topology, b).apply(rest) - pivot));
    });
  }
  return jac;
}

Eigen::MatrixXd skinned_direction_jacobian(const SkeletonTopology& topology,
                                           const Kinematics& kin, const SkinWeights& weights,
                                           const Vec3& rest) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, topology.parameter_count());
  jac.block<3, 3>(0, 3) = -skew(skin_direction(topology, kin, weights, rest));
  for (int k = 1; k < topology.joint_count(); ++k) {
    jac.block<3, 3>(0, 6 + 3 * (k - 1)) = accumulate_affected(topology, weights, k, [&](int b) {
      return Mat3(-skew(kin.bone_transform(topology, b).rotation * rest));
    });
  }
  return jac;
}

Eigen::MatrixXd pose_increment_jacobian(const SkeletonTopology& topology, const Pose& pose,
                                        const std::vector<Point3>& probes,
                                        const std::vector<SkinWeights>& weights) {
  const Kinematics kin = forward_kinematics(topology, pose);
  Eigen::MatrixXd jac(3 * probes.size(), topology.parameter_count());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    jac.middleRows(3 * i, 3) = skinned_point_jacobian(topology, kin, weights[i], probes[i]);
  }
  return jac;
}

Pose pose_from_bone_transforms(const SkeletonTopology& topology,
                               const std::vector<RigidTransform>& bone_transforms) {
  const int n = topology.joint_count();
  std::vector<int> first_child_bone(n, -1);
  for (int b = topology.bone_count() - 1; b >= 0; --b) first_child_bone[topology.bone(b).head] = b;

  std::vector<Mat3> global(n, Mat3::Identity());
  Pose pose = Pose::zero(topology);
  if (first_child_bone[0] >= 0) {
    pose.root = bone_transforms[first_child_bone[0]];
    pose.root.rotation = nearest_rotation(pose.root.rotation);
  }
  global[0] = pose.root.rotation;
  for (int j = 1; j < n; ++j) {
    const Mat3& parent = global[topology.joint(j).parent];
    const int b = first_child_bone[j];
    global[j] = b >= 0 ? nearest_rotation(bone_transforms[b].rotation) : parent;
    pose.rotations[j] = log_so3(parent.transpose() * global[j]);
  }
  return pose;
}

}  // namespace puppetrack
