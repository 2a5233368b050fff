#include "puppetrack/defgraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "puppetrack/error.hpp"

namespace puppetrack {

DeformationGraph DeformationGraph::build(const std::vector<Point3>& vertices, const GraphConfig& config) {
  if (vertices.empty()) throw Error(ErrorKind::kEmptyMesh, "cannot build a deformation graph without vertices");
  if (!(config.node_spacing > 0.0) || config.warp_neighbors < 1 ||
      config.warp_neighbors > kMaxWarpNeighbors || config.arap_neighbors < 1) {
    throw Error(ErrorKind::kInvalidArgument, "invalid graph configuration");
  }
  DeformationGraph g;
  g.config_ = config;
  // Greedy Poisson-disk selection in vertex order over a hash grid.
  const double cell = config.node_spacing;
  const double r2 = cell * cell;
  auto key = [&](const Point3& p) {
    return std::array<long, 3>{static_cast<long>(std::floor(p.x() / cell)),
                               static_cast<long>(std::floor(p.y() / cell)),
                               static_cast<long>(std::floor(p.z() / cell))};
  };
  std::map<std::array<long, 3>, std::vector<int>> grid;
  for (const Point3& v : vertices) {
    const auto k = key(v);
    bool free = true;
    for (long dx = -1; dx <= 1 && free; ++dx) {
      for (long dy = -1; dy <= 1 && free; ++dy) {
        for (long dz = -1; dz <= 1 && free; ++dz) {
          auto it = grid.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == grid.end()) continue;
          for (int n : it->second) {
            if ((g.positions_[n] - v).squaredNorm() < r2) {
              free = false;
              break;
            }
          }
        }
      }
    }
    if (!free) continue;
    grid[k].push_back(static_cast<int>(g.positions_.size()));
    g.positions_.push_back(v);
  }
  g.transforms_.assign(g.positions_.size(), RigidTransform::identity());
  g.skin_.assign(g.positions_.size(), SkinWeights{});
  g.rebuild_topology();
  return g;
}

void DeformationGraph::rebuild_topology() {
  index_ = KdTree(positions_);
  const int n = node_count();
  neighbors_.assign(n, {});
  std::vector<Neighbor> nn;
  for (int i = 0; i < n; ++i) {
    index_.knn(positions_[i], config_.arap_neighbors + 1, nn);
    for (const auto& nb : nn) {
      if (nb.index == i) continue;
      neighbors_[i].push_back(nb.index);
      neighbors_[nb.index].push_back(i);
    }
  }
  for (auto& list : neighbors_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

void DeformationGraph::set_transforms(std::vector<RigidTransform> transforms) {
  if (transforms.size() != positions_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "transform count does not match node count");
  }
  transforms_ = std::move(transforms);
}

NodeInfluence DeformationGraph::influence(const Point3& x) const {
  NodeInfluence inf;
  if (positions_.empty()) return inf;
  if (covered_influence(x, inf)) return inf;
  inf.node[0] = index_.nearest(x).index;
  inf.weight[0] = 1.0;
  inf.count = 1;
  return inf;
}

bool DeformationGraph::covered_influence(const Point3& x, NodeInfluence& inf) const {
  inf = NodeInfluence{};
  if (positions_.empty()) return false;
  std::vector<Neighbor> nn;
  index_.knn(x, config_.warp_neighbors, nn);
  const double s = sigma();
  const double cutoff2 = 16.0 * s * s;
  const double inv = 1.0 / (2.0 * s * s);
  double sum = 0.0;
  for (const auto& nb : nn) {
    if (nb.distance2 > cutoff2) continue;
    inf.node[inf.count] = nb.index;
    inf.weight[inf.count] = std::exp(-nb.distance2 * inv);
    sum += inf.weight[inf.count];
    ++inf.count;
  }
  if (inf.count == 0) return false;
  for (int k = 0; k < inf.count; ++k) inf.weight[k] /= sum;
  return true;
}

Point3 DeformationGraph::warp_point(const Point3& x, const NodeInfluence& inf) const {
  Point3 out = Point3::Zero();
  for (int k = 0; k < inf.count; ++k) out += inf.weight[k] * transforms_[inf.node[k]].apply(x);
  return out;
}

Vec3 DeformationGraph::warp_normal(const Vec3& n, const NodeInfluence& inf) const {
  Vec3 out = Vec3::Zero();
  for (int k = 0; k < inf.count; ++k) out += inf.weight[k] * (transforms_[inf.node[k]].rotation * n);
  const double len = out.norm();
  return len > 0.0 ? Vec3(out / len) : n;
}

RigidTransform DeformationGraph::local_transform(const Point3& x) const {
  const NodeInfluence inf = influence(x);
  TransformBlend blend;
  for (int k = 0; k < inf.count; ++k) blend.add(inf.weight[k], transforms_[inf.node[k]]);
  return blend.rigid();
}

double DeformationGraph::distance_to_nodes(const Point3& x) const {
  if (positions_.empty()) return 1e300;
  return std::sqrt(index_.nearest(x).distance2);
}

void DeformationGraph::assign_skin_weights(const PuppetMesh& rest, const KdTree& rest_index) {
  skin_.resize(positions_.size());
  for (int i = 0; i < node_count(); ++i) {
    skin_[i] = rest.weights[rest_index.nearest(positions_[i]).index];
  }
}

int DeformationGraph::extend(const std::vector<Point3>& vertices, const PuppetMesh& rest,
                             const KdTree& rest_index) {
  const double r2 = config_.node_spacing * config_.node_spacing;
  std::vector<Point3> added;
  for (const Point3& v : vertices) {
    if (index_.nearest(v).distance2 < r2) continue;
    bool near_added = false;
    for (const Point3& a : added) {
      if ((a - v).squaredNorm() < r2) {
        near_added = true;
        break;
      }
    }
    if (!near_added) added.push_back(v);
  }
  if (added.empty()) return 0;
  std::vector<RigidTransform> sampled;
  sampled.reserve(added.size());
  for (const Point3& a : added) sampled.push_back(local_transform(a));
  for (std::size_t k = 0; k < added.size(); ++k) {
    positions_.push_back(added[k]);
    transforms_.push_back(sampled[k]);
  }
  rebuild_topology();
  assign_skin_weights(rest, rest_index);
  return static_cast<int>(added.size());
}

DeformationGraph initialize_from_puppet(const DeformationGraph& previous, const PuppetWarpField& field) {
  DeformationGraph out = previous;
  for (int i = 0; i < previous.node_count(); ++i) {
    const Point3 here = previous.warp_point(previous.positions()[i]);
    out.set_transform(i, compose(field(here), previous.transforms()[i]));
  }
  return out;
}

}  // namespace puppetrack
