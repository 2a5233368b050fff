#include "puppetrack/puppet.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "puppetrack/error.hpp"

namespace puppetrack {

namespace {

double distance_to_segment(const Point3& p, const Point3& a, const Point3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

// Orthonormal pair perpendicular to unit e.
void perpendicular_frame(const Vec3& e, Vec3& u, Vec3& w) {
  const Vec3 helper = std::abs(e.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  u = e.cross(helper).normalized();
  w = e.cross(u);
}

void append_capsule(const Point3& head, const Point3& tail, double radius,
                    const BodyProportions& prop, TriangleMesh& mesh) {
  const Vec3 axis = tail - head;
  const double length = axis.norm();
  const Vec3 e = axis / length;
  Vec3 u, w;
  perpendicular_frame(e, u, w);
  const int segments = prop.segments;
  const int cap = prop.cap_rings;
  const double circumference_step = 2.0 * std::numbers::pi * radius / segments;
  const int cyl = std::max(1, static_cast<int>(std::lround(length / circumference_step)));

  const int base = static_cast<int>(mesh.vertices.size());
  struct Ring {
    Point3 center;
    double rho;
    double axial;  // axial component of the normal
  };
  std::vector<Ring> rings;
  for (int k = 1; k <= cap; ++k) {
    const double phi = k * (std::numbers::pi / 2.0) / cap;
    rings.push_back({head - radius * std::cos(phi) * e, radius * std::sin(phi), -std::cos(phi)});
  }
  for (int m = 1; m < cyl; ++m) {
    rings.push_back({head + (length * m / cyl) * e, radius, 0.0});
  }
  for (int k = cap; k >= 1; --k) {
    const double phi = k * (std::numbers::pi / 2.0) / cap;
    rings.push_back({tail + radius * std::cos(phi) * e, radius * std::sin(phi), std::cos(phi)});
  }

  mesh.vertices.push_back(head - radius * e);
  mesh.normals.push_back(-e);
  for (const Ring& ring : rings) {
    const double radial = std::sqrt(std::max(0.0, 1.0 - ring.axial * ring.axial));
    for (int s = 0; s < segments; ++s) {
      const double theta = 2.0 * std::numbers::pi * s / segments;
      const Vec3 dir = std::cos(theta) * u + std::sin(theta) * w;
      mesh.vertices.push_back(ring.center + ring.rho * dir);
      mesh.normals.push_back((radial * dir + ring.axial * e).normalized());
    }
  }
  mesh.vertices.push_back(tail + radius * e);
  mesh.normals.push_back(e);

  const int pole0 = base;
  const int pole1 = static_cast<int>(mesh.vertices.size()) - 1;
  const int nrings = static_cast<int>(rings.size());
  auto ring_vertex = [&](int r, int s) { return base + 1 + r * segments + (s % segments); };
  auto add = [&](int a, int b, int c) {
    // Orient outward using the analytic normals.
    const Vec3 n = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
    const Vec3 avg = mesh.normals[a] + mesh.normals[b] + mesh.normals[c];
    if (n.dot(avg) >= 0.0) {
      mesh.triangles.push_back({a, b, c});
    } else {
      mesh.triangles.push_back({a, c, b});
    }
  };
  for (int s = 0; s < segments; ++s) add(pole0, ring_vertex(0, s), ring_vertex(0, s + 1));
  for (int r = 0; r + 1 < nrings; ++r) {
    for (int s = 0; s < segments; ++s) {
      add(ring_vertex(r, s), ring_vertex(r + 1, s), ring_vertex(r + 1, s + 1));
      add(ring_vertex(r, s), ring_vertex(r + 1, s + 1), ring_vertex(r, s + 1));
    }
  }
  for (int s = 0; s < segments; ++s) add(pole1, ring_vertex(nrings - 1, s + 1), ring_vertex(nrings - 1, s));
}

}  // namespace

void PuppetMesh::update_labels(double joint_threshold) {
  const std::size_t n = mesh.vertices.size();
  part.assign(n, 0);
  joint_region.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (const auto& bw : weights[i]) {
      if (bw.weight > best) {
        best = bw.weight;
        part[i] = bw.bone;
      }
    }
    joint_region[i] = best < joint_threshold;
  }
}

BodyProportions default_proportions(const SkeletonTopology& topology) {
  BodyProportions prop;
  prop.bone_radius.assign(topology.bone_count(), 0.05);
  auto set = [&](const char* name, double r) {
    for (int b = 0; b < topology.bone_count(); ++b) {
      if (topology.bone(b).name == name) prop.bone_radius[b] = r;
    }
  };
  set("lower_spine", 0.14);
  set("upper_spine", 0.155);
  set("head", 0.10);
  set("l_clavicle", 0.06);
  set("r_clavicle", 0.06);
  set("l_upper_arm", 0.05);
  set("r_upper_arm", 0.05);
  set("l_forearm", 0.042);
  set("r_forearm", 0.042);
  set("l_pelvis", 0.09);
  set("r_pelvis", 0.09);
  set("l_thigh", 0.075);
  set("r_thigh", 0.075);
  set("l_shin", 0.055);
  set("r_shin", 0.055);
  return prop;
}

PuppetMesh generate_procedural_puppet(const SkeletonTopology& topology,
                                      const BodyProportions& proportions) {
  if (topology.bone_count() == 0) throw Error(ErrorKind::kInvalidProportions, "topology has no bones");
  if (static_cast<int>(proportions.bone_radius.size()) != topology.bone_count()) {
    throw Error(ErrorKind::kInvalidProportions, "one radius per bone required");
  }
  if (proportions.segments < 3 || proportions.cap_rings < 1 || !(proportions.falloff_power > 0.0)) {
    throw Error(ErrorKind::kInvalidProportions, "tessellation parameters out of range");
  }
  const auto& rest = topology.rest_positions();
  PuppetMesh puppet;
  for (int b = 0; b < topology.bone_count(); ++b) {
    const Bone& bone = topology.bone(b);
    const double r = proportions.bone_radius[b];
    if (!(r > 0.0) || (rest[bone.tail] - rest[bone.head]).norm() <= kMinBoneLength) {
      throw Error(ErrorKind::kInvalidProportions, "bone '" + bone.name + "' needs positive radius and length");
    }
    append_capsule(rest[bone.head], rest[bone.tail], r, proportions, puppet.mesh);
  }

  const std::size_t n = puppet.mesh.vertices.size();
  puppet.weights.resize(n);
  std::vector<double> dist(topology.bone_count());
  for (std::size_t i = 0; i < n; ++i) {
    const Point3& p = puppet.mesh.vertices[i];
    double dmin = 1e300;
    for (int b = 0; b < topology.bone_count(); ++b) {
      dist[b] = std::max(1e-6, distance_to_segment(p, rest[topology.bone(b).head], rest[topology.bone(b).tail]));
      dmin = std::min(dmin, dist[b]);
    }
    SkinWeights w;
    double sum = 0.0;
    for (int b = 0; b < topology.bone_count(); ++b) {
      const double raw = std::pow(dmin / dist[b], proportions.falloff_power);
      if (raw < 1e-2) continue;
      w.push_back({b, raw});
      sum += raw;
    }
    for (auto& bw : w) bw.weight /= sum;
    puppet.weights[i] = std::move(w);
  }
  puppet.update_labels();
  return puppet;
}

TransformBlend blended_transform(const SkinWeights& weights,
                                 const std::vector<RigidTransform>& bone_transforms) {
  TransformBlend blend;
  for (const auto& bw : weights) blend.add(bw.weight, bone_transforms[bw.bone]);
  return blend;
}

SkinnedSurface skin(const PuppetMesh& puppet, const std::vector<RigidTransform>& bone_transforms) {
  SkinnedSurface out;
  const std::size_t n = puppet.vertex_count();
  out.vertices.resize(n);
  out.normals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TransformBlend blend = blended_transform(puppet.weights[i], bone_transforms);
    out.vertices[i] = blend.apply(puppet.mesh.vertices[i]);
    out.normals[i] = blend.apply_normal(puppet.mesh.normals[i]);
  }
  return out;
}

AlignedPuppet AlignedPuppet::rest(const PuppetMesh& puppet, int bone_count, int frame) {
  AlignedPuppet a;
  a.bone_transforms.assign(bone_count, RigidTransform::identity());
  a.vertices = puppet.mesh.vertices;
  a.normals = puppet.mesh.normals;
  a.frame = frame;
  return a;
}

namespace {

struct PartPair {
  Point3 source;  // rest vertex
  Point3 target;
  Vec3 normal;
};

// Observed joint a bone endpoint should land on.
struct JointAnchor {
  Point3 source;  // rest joint
  Point3 target;
};

double part_sum_squares(const std::vector<PartPair>& pairs, const RigidTransform& t) {
  double s = 0.0;
  for (const auto& pp : pairs) {
    const double r = point_to_plane(t.apply(pp.source), pp.target, pp.normal);
    s += r * r;
  }
  return s;
}

double part_objective(const std::vector<PartPair>& pairs, const std::vector<JointAnchor>& anchors,
                      double anchor_weight, const RigidTransform& t) {
  double s = part_sum_squares(pairs, t);
  for (const auto& ja : anchors) s += anchor_weight * (t.apply(ja.source) - ja.target).squaredNorm();
  return s;
}

// One Gauss-Newton step of rigid point-to-plane alignment with joint
// anchors. The rotation is taken about the centroid of the posed source
// points and excludes twist about `axis`, which neither a capsule's surface
// nor its endpoints can observe.
RigidTransform point_to_plane_step(const std::vector<PartPair>& pairs,
                                   const std::vector<JointAnchor>& anchors, double anchor_weight,
                                   const Vec3& axis, const RigidTransform& t) {
  Point3 centroid = Point3::Zero();
  for (const auto& pp : pairs) centroid += t.apply(pp.source);
  centroid /= static_cast<double>(pairs.size());

  Eigen::Matrix<double, 6, 5> basis = Eigen::Matrix<double, 6, 5>::Zero();
  basis.topLeftCorner<3, 3>().setIdentity();
  const Vec3 e1 = axis.unitOrthogonal();
  basis.block<3, 1>(3, 3) = e1;
  basis.block<3, 1>(3, 4) = axis.cross(e1);

  Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
  for (const auto& pp : pairs) {
    const Point3 p = t.apply(pp.source);
    Eigen::Matrix<double, 6, 1> j;
    j.head<3>() = pp.normal;
    j.tail<3>() = (p - centroid).cross(pp.normal);
    const double r = point_to_plane(p, pp.target, pp.normal);
    a += j * j.transpose();
    g += j * r;
  }
  for (const auto& ja : anchors) {
    const Point3 p = t.apply(ja.source);
    Eigen::Matrix<double, 3, 6> j;
    j.leftCols<3>() = Mat3::Identity();
    j.rightCols<3>() = -skew(p - centroid);
    a += anchor_weight * j.transpose() * j;
    g += anchor_weight * j.transpose() * (p - ja.target);
  }
  Eigen::Matrix<double, 5, 5> reduced = basis.transpose() * a * basis;
  reduced.diagonal().array() += 1e-9 * reduced.trace();
  const Eigen::Matrix<double, 6, 1> x = basis * reduced.ldlt().solve(-basis.transpose() * g);
  RigidTransform step = RigidTransform::rotate_about(exp_so3(x.tail<3>()), centroid);
  step.translation += x.head<3>();
  return compose(step, t);
}

}  // namespace

AlignedPuppet align_to_frame(const SkeletonTopology& topology, const PuppetMesh& puppet,
                             const AlignedPuppet& previous,
                             const JointObservation& prev_joints,
                             const JointObservation& curr_joints, const TargetCloud& cloud,
                             const Intrinsics& intrinsics, const AlignConfig& config,
                             AlignReport* report) {
  const int nbones = topology.bone_count();
  if (cloud.valid_count() == 0) throw Error(ErrorKind::kNoCorrespondences, "target cloud is empty");
  if (static_cast<int>(previous.bone_transforms.size()) != nbones) {
    throw Error(ErrorKind::kInvalidArgument, "previous alignment has the wrong bone count");
  }

  // Frame-to-frame motion per bone from the skeleton; unobserved bones take
  // their parent part's motion.
  std::vector<RigidTransform> motion(nbones);
  std::vector<bool> resolved(nbones, false);
  std::vector<int> inherited;
  for (int b = 0; b < nbones; ++b) {
    try {
      motion[b] = bone_rigid_transform(topology, b, prev_joints, curr_joints);
      resolved[b] = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kMissingJoint && e.kind() != ErrorKind::kDegenerateBone) throw;
      inherited.push_back(b);
    }
  }
  for (bool progress = true; progress;) {
    progress = false;
    for (int b : inherited) {
      if (resolved[b]) continue;
      const int parent = topology.parent_bone(b);
      if (parent < 0) {
        motion[b] = RigidTransform::identity();
      } else if (resolved[parent]) {
        motion[b] = motion[parent];
      } else {
        continue;
      }
      resolved[b] = true;
      progress = true;
    }
  }

  std::vector<RigidTransform> transforms(nbones);
  for (int b = 0; b < nbones; ++b) transforms[b] = compose(motion[b], previous.bone_transforms[b]);

  std::vector<std::vector<int>> part_vertices(nbones);
  for (std::size_t i = 0; i < puppet.vertex_count(); ++i) {
    if (!puppet.joint_region[i]) part_vertices[puppet.part[i]].push_back(static_cast<int>(i));
  }

  const double cos_limit = std::cos(config.thresholds.max_normal_angle_deg * std::numbers::pi / 180.0);
  for (int iter = 0; iter < config.icp_iterations; ++iter) {
    double before = 0.0, after = 0.0;
    int total = 0;
    for (int b = 0; b < nbones; ++b) {
      std::vector<PartPair> pairs;
      const RigidTransform& t = transforms[b];
      for (int i : part_vertices[b]) {
        const Point3 p = t.apply(puppet.mesh.vertices[i]);
        const Vec3 n = t.apply_normal(puppet.mesh.normals[i]);
        int u = 0, v = 0;
        if (!intrinsics.project(p, u, v) || !cloud.is_valid(u, v)) continue;
        const Point3& q = cloud.point(u, v);
        const Vec3& nq = cloud.normal(u, v);
        if (!((p - q).norm() < config.thresholds.max_distance) || !(n.dot(nq) > cos_limit)) continue;
        pairs.push_back({puppet.mesh.vertices[i], q, nq});
      }
      if (pairs.empty()) continue;
      std::vector<JointAnchor> anchors;
      const Bone& bone = topology.bone(b);
      for (int j : {bone.head, bone.tail}) {
        if (curr_joints.is_valid(j)) anchors.push_back({topology.rest_positions()[j], curr_joints.positions[j]});
      }
      const double w = config.joint_weight * static_cast<double>(pairs.size());
      const double s0 = part_sum_squares(pairs, t);
      double s1 = s0;
      if (pairs.size() >= 6) {
        const Vec3 axis = t.apply_normal(topology.rest_positions()[bone.tail] - topology.rest_positions()[bone.head]);
        const RigidTransform candidate = point_to_plane_step(pairs, anchors, w, axis.normalized(), t);
        const double sc = part_sum_squares(pairs, candidate);
        if (sc <= s0 && part_objective(pairs, anchors, w, candidate) <= part_objective(pairs, anchors, w, t)) {
          transforms[b] = candidate;
          s1 = sc;
        }
      }
      before += s0;
      after += s1;
      total += static_cast<int>(pairs.size());
    }
    if (total == 0) {
      if (iter == 0) throw Error(ErrorKind::kNoCorrespondences, "no puppet vertex matched the target cloud");
      break;
    }
    if (report) {
      report->rms_before.push_back(std::sqrt(before / total));
      report->rms_after.push_back(std::sqrt(after / total));
      report->inliers.push_back(total);
    }
  }
  if (report) report->inherited_bones = inherited;

  AlignedPuppet aligned;
  aligned.bone_transforms = transforms;
  SkinnedSurface surface = skin(puppet, transforms);
  aligned.vertices = std::move(surface.vertices);
  aligned.normals = std::move(surface.normals);
  aligned.frame = previous.frame + 1;
  return aligned;
}

PuppetWarpField::PuppetWarpField(const PuppetMesh& puppet, std::vector<Point3> reference_vertices,
                                 std::vector<RigidTransform> bone_transforms, int neighbors)
    : index_(std::move(reference_vertices)), neighbors_(neighbors) {
  vertex_transforms_.resize(puppet.vertex_count());
  for (std::size_t i = 0; i < puppet.vertex_count(); ++i) {
    vertex_transforms_[i] = blended_transform(puppet.weights[i], bone_transforms);
  }
  sigma_ = mean_edge_length(puppet.mesh);
  if (!(sigma_ > 0.0)) sigma_ = 1.0;
}

PuppetWarpField PuppetWarpField::from_rest(const PuppetMesh& rest, const AlignedPuppet& aligned) {
  return PuppetWarpField(rest, rest.mesh.vertices, aligned.bone_transforms);
}

PuppetWarpField PuppetWarpField::between(const PuppetMesh& rest, const AlignedPuppet& previous,
                                         const AlignedPuppet& current) {
  std::vector<RigidTransform> deltas(current.bone_transforms.size());
  for (std::size_t b = 0; b < deltas.size(); ++b) {
    deltas[b] = compose(current.bone_transforms[b], previous.bone_transforms[b].inverse());
  }
  return PuppetWarpField(rest, previous.vertices, std::move(deltas));
}

std::vector<Neighbor> PuppetWarpField::weights(const Point3& x) const {
  std::vector<Neighbor> nn = index_.knn(x, neighbors_);
  if (nn.empty()) return nn;
  const double d0 = nn.front().distance2;
  const double inv = 1.0 / (2.0 * sigma_ * sigma_);
  double sum = 0.0;
  for (auto& n : nn) {
    n.distance2 = std::exp(-(n.distance2 - d0) * inv);
    sum += n.distance2;
  }
  for (auto& n : nn) n.distance2 /= sum;
  return nn;
}

TransformBlend PuppetWarpField::blend(const Point3& x) const {
  TransformBlend out;
  for (const auto& n : weights(x)) out.add(n.distance2, vertex_transforms_[n.index]);
  return out;
}

void save_puppet(const std::filesystem::path& obj_path, const std::filesystem::path& weights_path,
                 const PuppetMesh& puppet) {
  write_obj(obj_path, puppet.mesh);
  std::ofstream out(weights_path);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + weights_path.string());
  out << "vertex,bone,weight\n";
  char buf[96];
  for (std::size_t i = 0; i < puppet.weights.size(); ++i) {
    for (const auto& bw : puppet.weights[i]) {
      std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g\n", i, bw.bone, bw.weight);
      out << buf;
    }
  }
  if (!out) throw Error(ErrorKind::kIoFailure, "error writing " + weights_path.string());
}

PuppetMesh load_puppet(const std::filesystem::path& obj_path,
                       const std::filesystem::path& weights_path) {
  PuppetMesh puppet;
  puppet.mesh = read_obj(obj_path);
  if (puppet.mesh.normals.empty()) {
    puppet.mesh.normals = vertex_normals(puppet.mesh.vertices, puppet.mesh.triangles);
  }
  puppet.weights.resize(puppet.mesh.vertices.size());
  std::ifstream in(weights_path);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot read " + weights_path.string());
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    const std::size_t v = std::stoul(a);
    if (v >= puppet.weights.size()) throw Error(ErrorKind::kIoFailure, "weight row references a missing vertex");
    puppet.weights[v].push_back({std::stoi(b), std::stod(c)});
  }
  for (auto& w : puppet.weights) {
    double sum = 0.0;
    for (const auto& bw : w) sum += bw.weight;
    if (!(sum > 0.0)) throw Error(ErrorKind::kIoFailure, "vertex without skinning weights in " + weights_path.string());
    for (auto& bw : w) bw.weight /= sum;
  }
  puppet.update_labels();
  return puppet;
}

}  // namespace puppetrack
