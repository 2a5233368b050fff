#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "puppetrack/geom.hpp"
#include "puppetrack/mesh.hpp"
#include "puppetrack/puppet.hpp"
#include "puppetrack/skeleton.hpp"
#include "puppetrack/synth.hpp"

namespace testing {

using namespace puppetrack;

inline constexpr double kPi = std::numbers::pi;

inline double deg(double d) { return d * kPi / 180.0; }

struct Random {
  explicit Random(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine); }
  Vec3 vec(double lo, double hi) { return Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)); }
  Vec3 unit() {
    std::normal_distribution<double> g;
    Vec3 v;
    do v = Vec3(g(engine), g(engine), g(engine));
    while (v.norm() < 1e-6);
    return v.normalized();
  }
  Mat3 rotation() { return exp_so3(unit() * uniform(0.0, kPi * 0.999)); }
  RigidTransform rigid(double span = 1.0) { return {rotation(), vec(-span, span)}; }

  std::mt19937_64 engine;
};

inline double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("puppetrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// UV sphere with outward normals.
inline TriangleMesh uv_sphere(double radius, const Point3& center, int rings, int segments) {
  TriangleMesh m;
  m.vertices.push_back(center + Vec3(0, 0, -radius));
  for (int r = 1; r < rings; ++r) {
    const double theta = kPi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * kPi * s / segments;
      m.vertices.push_back(center + radius * Vec3(std::sin(theta) * std::cos(phi),
                                                  std::sin(theta) * std::sin(phi), -std::cos(theta)));
    }
  }
  m.vertices.push_back(center + Vec3(0, 0, radius));
  const int top = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.triangles.push_back({0, ring(1, s + 1), ring(1, s)});
  for (int r = 1; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({ring(r, s), ring(r, s + 1), ring(r + 1, s + 1)});
      m.triangles.push_back({ring(r, s), ring(r + 1, s + 1), ring(r + 1, s)});
    }
  }
  for (int s = 0; s < segments; ++s) m.triangles.push_back({ring(rings - 1, s), ring(rings - 1, s + 1), top});
  for (const auto& v : m.vertices) m.normals.push_back((v - center).normalized());
  return m;
}

/// n x n grid in the plane z = z0 spanning [-half, half]^2, normals -z
/// (facing a camera at the origin).
inline TriangleMesh grid_plane(int n, double half, double z0) {
  TriangleMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      m.vertices.push_back(Point3(-half + 2.0 * half * i / n, -half + 2.0 * half * j / n, z0));
      m.normals.push_back(Vec3(0, 0, -1));
    }
  }
  auto at = [&](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
      m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
    }
  }
  return m;
}

inline TriangleMesh translated(TriangleMesh m, const Vec3& t) {
  for (auto& v : m.vertices) v += t;
  return m;
}

/// Default humanoid with its puppet, posed by root placement alone. The
/// returned topology and puppet are expressed in that placed rest pose,
/// as the tracker's bootstrap would fit them.
struct PlacedBody {
  SkeletonTopology template_topology;
  PuppetMesh template_puppet;
  SkeletonTopology topology;
  PuppetMesh puppet;
  JointObservation joints;
};

inline PlacedBody placed_body() {
  PlacedBody b;
  b.template_topology = default_topology();
  b.template_puppet = generate_procedural_puppet(b.template_topology, default_proportions(b.template_topology));
  Pose pose = Pose::zero(b.template_topology);
  pose.root = default_root_placement();
  const Kinematics kin = forward_kinematics(b.template_topology, pose);
  b.topology = b.template_topology.with_rest_positions(kin.joint_positions);
  const SkinnedSurface s = skin(b.template_puppet, kin.bone_transforms(b.template_topology));
  b.puppet = b.template_puppet;
  b.puppet.mesh.vertices = s.vertices;
  b.puppet.mesh.normals = s.normals;
  b.puppet.update_labels();
  b.joints = JointObservation::all_valid(kin.joint_positions);
  return b;
}

/// Placed body posed further by per-joint rotations (world frame of the
/// placed rest pose).
struct PosedBody {
  Kinematics kin;
  std::vector<RigidTransform> bones;
  TriangleMesh mesh;
  JointObservation joints;
};

inline PosedBody pose_body(const PlacedBody& body, const Pose& pose) {
  PosedBody p;
  p.kin = forward_kinematics(body.topology, pose);
  p.bones = p.kin.bone_transforms(body.topology);
  const SkinnedSurface s = skin(body.puppet, p.bones);
  p.mesh = body.puppet.mesh;
  p.mesh.vertices = s.vertices;
  p.mesh.normals = s.normals;
  p.joints = JointObservation::all_valid(p.kin.joint_positions);
  return p;
}

/// Both shoulders rotated by `angle` about the view axis, in mirror image.
inline Pose arms_rotated(const SkeletonTopology& topology, double angle) {
  Pose pose = Pose::zero(topology);
  pose.rotations[topology.find_joint("l_shoulder")] = Vec3(0, 0, angle);
  pose.rotations[topology.find_joint("r_shoulder")] = Vec3(0, 0, -angle);
  return pose;
}

}  // namespace testing
