#pragma once

#include "puppetrack/solver.hpp"
#include "puppetrack/synth.hpp"
#include "support.hpp"

namespace testing {

// Placed body with a graph over its puppet and a subsampled tracking surface.
// Held by pointer: the model refers into it.
struct Scene {
  // With `visible_only` the surface keeps the vertices the camera sees, as a
  // fused first frame would; the puppet's overlapping capsules otherwise leave
  // interior sheets that projective association pairs with outer surfaces.
  Scene(double spacing, int stride, bool visible_only = false)
      : body(placed_body()), index(body.puppet.mesh.vertices) {
    std::vector<Point3> v;
    std::vector<Vec3> n;
    const Intrinsics k = default_intrinsics();
    const DepthImage depth = render_depth(body.puppet.mesh, k);
    for (std::size_t i = 0; i < body.puppet.vertex_count(); i += stride) {
      const Point3& p = body.puppet.mesh.vertices[i];
      int u = 0, w = 0;
      if (visible_only && (!k.project(p, u, w) || std::abs(depth.at(u, w) - p.z()) > 0.002)) continue;
      v.push_back(p);
      n.push_back(body.puppet.mesh.normals[i]);
    }
    graph = build_graph(visible_only ? v : body.puppet.mesh.vertices, {.node_spacing = spacing});
    graph.assign_skin_weights(body.puppet, index);
    surface = make_tracking_surface(v, n, graph, body.puppet, index);
  }

  TrackingModel model() const { return {&graph, &body.topology, &surface}; }
  SolveState identity() const {
    return {std::vector<RigidTransform>(graph.node_count()), Pose::zero(body.topology), 0};
  }

  testing::PlacedBody body;
  KdTree index;
  DeformationGraph graph;
  TrackingSurface surface;
};

// Node transforms that carry each node exactly where the skeleton puts it.
inline std::vector<RigidTransform> skeleton_consistent(const Scene& s, const Pose& pose) {
  const Kinematics kin = forward_kinematics(s.body.topology, pose);
  const auto bones = kin.bone_transforms(s.body.topology);
  std::vector<RigidTransform> out;
  for (int i = 0; i < s.graph.node_count(); ++i) {
    const TransformBlend blend = blended_transform(s.graph.skin_weights()[i], bones);
    const Mat3 r = blend.rigid().rotation;
    const Point3& p = s.graph.positions()[i];
    out.push_back({r, blend.apply(p) - r * p});
  }
  return out;
}

inline Pose random_pose(const SkeletonTopology& t, Random& rng, double angle) {
  Pose pose = Pose::zero(t);
  pose.root = {exp_so3(rng.unit() * rng.uniform(0.0, angle)), rng.vec(-0.1, 0.1)};
  for (std::size_t j = 1; j < pose.rotations.size(); ++j) pose.rotations[j] = rng.unit() * rng.uniform(0.0, angle);
  return pose;
}

// Each surface vertex paired with a jittered copy of itself.
inline CorrespondenceSet jittered_pairs(const TrackingSurface& surface, Random& rng) {
  CorrespondenceSet c;
  for (std::size_t i = 0; i < surface.vertices.size(); ++i) {
    c.push_back({static_cast<int>(i), surface.vertices[i] + rng.vec(-0.02, 0.02),
                 (surface.normals[i] + rng.vec(-0.3, 0.3)).normalized(), 1.0});
  }
  return c;
}

// Pairs pointing exactly at where `state` puts each surface vertex.
inline CorrespondenceSet exact_pairs(const TrackingModel& model, const SolveState& state) {
  const WarpedSurface w = warp_surface(model, state);
  CorrespondenceSet c;
  for (std::size_t i = 0; i < w.graph_points.size(); ++i) {
    c.push_back({static_cast<int>(i), w.graph_points[i], w.graph_normals[i], 1.0});
  }
  return c;
}

}  // namespace testing
