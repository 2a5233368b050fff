#pragma once

#include <array>
#include <vector>

#include "puppetrack/geom.hpp"
#include "puppetrack/puppet.hpp"
#include "puppetrack/skeleton.hpp"
#include "puppetrack/spatial.hpp"

namespace puppetrack {

inline constexpr int kMaxWarpNeighbors = 4;

struct GraphConfig {
  double node_spacing = 0.05;  // meters; also the influence radius
  int arap_neighbors = 6;
  int warp_neighbors = kMaxWarpNeighbors;
};

/// Normalized node weights at a canonical point.
struct NodeInfluence {
  std::array<int, kMaxWarpNeighbors> node{};
  std::array<double, kMaxWarpNeighbors> weight{};
  int count = 0;
};

/// Embedded deformation graph. The warp of a canonical point x is
///   W(x) = sum_i w(p_i, x) T_i x
/// over its nearest nodes with w ~ exp(-|x - p_i|^2 / (2 sigma^2)),
/// normalized; nodes beyond 4 sigma do not contribute unless no node is that
/// close, in which case the nearest node alone carries x.
class DeformationGraph {
 public:
  DeformationGraph() = default;

  /// Greedy Poisson-disk subsample of `vertices` at the configured spacing.
  /// Transforms start at identity. Throws kEmptyMesh for no vertices.
  static DeformationGraph build(const std::vector<Point3>& vertices, const GraphConfig& config = {});

  int node_count() const { return static_cast<int>(positions_.size()); }
  const GraphConfig& config() const { return config_; }
  double sigma() const { return config_.node_spacing; }
  const std::vector<Point3>& positions() const { return positions_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  const std::vector<SkinWeights>& skin_weights() const { return skin_; }

  const std::vector<RigidTransform>& transforms() const { return transforms_; }
  void set_transforms(std::vector<RigidTransform> transforms);
  void set_transform(int i, const RigidTransform& t) { transforms_[i] = t; }

  /// Node position carried by its own transform, T_i p_i.
  Point3 warped_node(int i) const { return transforms_[i].apply(positions_[i]); }

  NodeInfluence influence(const Point3& x) const;
  /// Influence restricted to nodes within 4 sigma; false when there are none.
  bool covered_influence(const Point3& x, NodeInfluence& out) const;
  Point3 warp_point(const Point3& x) const { return warp_point(x, influence(x)); }
  Vec3 warp_normal(const Point3& x, const Vec3& n) const { return warp_normal(n, influence(x)); }
  Point3 warp_point(const Point3& x, const NodeInfluence& inf) const;
  Vec3 warp_normal(const Vec3& n, const NodeInfluence& inf) const;
  /// Blend of node transforms at x, projected to a rigid transform.
  RigidTransform local_transform(const Point3& x) const;

  /// Nearest-node distance from x (canonical).
  double distance_to_nodes(const Point3& x) const;

  /// Copies each node's skinning weights from the nearest rest-puppet vertex.
  void assign_skin_weights(const PuppetMesh& rest, const KdTree& rest_index);

  /// Adds nodes for vertices farther than the node spacing from every node.
  /// New transforms are sampled from the current warp. Returns nodes added.
  int extend(const std::vector<Point3>& vertices, const PuppetMesh& rest, const KdTree& rest_index);

 private:
  void rebuild_topology();

  GraphConfig config_;
  std::vector<Point3> positions_;
  std::vector<RigidTransform> transforms_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<SkinWeights> skin_;
  KdTree index_;
};

inline DeformationGraph build_graph(const std::vector<Point3>& vertices, const GraphConfig& config = {}) {
  return DeformationGraph::build(vertices, config);
}

/// Left-composes every node transform with the puppet field evaluated where
/// the node currently sits: T_i <- W_p(W_prev(p_i)) o T_i.
DeformationGraph initialize_from_puppet(const DeformationGraph& previous, const PuppetWarpField& field);

}  // namespace puppetrack
