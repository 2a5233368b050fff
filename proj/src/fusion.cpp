#include "puppetrack/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "puppetrack/error.hpp"

namespace puppetrack {
namespace {

constexpr double kDepthJump = 0.05;  // meters; no interpolation across larger steps
constexpr double kSnap = 1e-3;       // edge fraction

// Bilinear depth at the continuous projection of p, or the nearest pixel's
// depth where the 2x2 neighborhood is incomplete or straddles an edge.
double sample_depth(const Point3& p, const DepthImage& depth, const Intrinsics& k) {
  int u = 0, v = 0;
  if (!k.project(p, u, v)) return 0.0;
  const double x = k.fx * p.x() / p.z() + k.cx;
  const double y = k.fy * p.y() / p.z() + k.cy;
  const int u0 = static_cast<int>(std::floor(x)), v0 = static_cast<int>(std::floor(y));
  if (u0 >= 0 && v0 >= 0 && u0 + 1 < k.width && v0 + 1 < k.height) {
    const double d00 = depth.at(u0, v0), d10 = depth.at(u0 + 1, v0);
    const double d01 = depth.at(u0, v0 + 1), d11 = depth.at(u0 + 1, v0 + 1);
    const double lo = std::min({d00, d10, d01, d11}), hi = std::max({d00, d10, d01, d11});
    if (lo > 0.0 && hi - lo < kDepthJump) {
      const double fx = x - u0, fy = y - v0;
      return (1.0 - fy) * ((1.0 - fx) * d00 + fx * d10) + fy * ((1.0 - fx) * d01 + fx * d11);
    }
  }
  return depth.at(u, v);
}

void integrate_point(TsdfVolume& volume, std::size_t idx, const Point3& p, const DepthImage& depth,
                     const Intrinsics& intrinsics) {
  const double d = sample_depth(p, depth, intrinsics);
  if (d <= 0.0) return;
  volume.integrate_sample(idx, d - p.z());
}

// Cube corners and the six tetrahedra around the 0-6 diagonal. Every cell
// splits its faces along the same diagonal direction, so neighbors agree.
constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6},
}};

class Extractor {
 public:
  explicit Extractor(const TsdfVolume& volume) : volume_(volume) {}

  TriangleMesh run() {
    const auto& dims = volume_.dims();
    for (int k = 0; k + 1 < dims[2]; ++k) {
      for (int j = 0; j + 1 < dims[1]; ++j) {
        for (int i = 0; i + 1 < dims[0]; ++i) cell(i, j, k);
      }
    }
    return finish();
  }

 private:
  void cell(int i, int j, int k) {
    std::array<std::size_t, 8> idx;
    std::array<double, 8> val;
    bool negative = false, positive = false;
    for (int c = 0; c < 8; ++c) {
      idx[c] = volume_.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
      if (volume_.weight(idx[c]) <= 0.0f) return;
      val[c] = volume_.value(idx[c]);
      (val[c] < 0.0 ? negative : positive) = true;
    }
    if (!negative || !positive) return;
    for (const auto& tet : kTets) {
      std::array<int, 4> inside, outside;
      int ni = 0, no = 0;
      for (int c : tet) {
        if (val[c] < 0.0) inside[ni++] = c;
        else outside[no++] = c;
      }
      if (ni == 0 || no == 0) continue;
      auto vert = [&](int a, int b) { return edge_vertex(idx[a], idx[b], val[a], val[b]); };
      if (ni == 1) {
        triangle(vert(inside[0], outside[0]), vert(inside[0], outside[1]), vert(inside[0], outside[2]));
      } else if (no == 1) {
        triangle(vert(outside[0], inside[0]), vert(outside[0], inside[1]), vert(outside[0], inside[2]));
      } else {
        const int a = vert(inside[0], outside[0]);
        const int b = vert(inside[0], outside[1]);
        const int c = vert(inside[1], outside[1]);
        const int d = vert(inside[1], outside[0]);
        triangle(a, b, c);
        triangle(a, c, d);
      }
    }
  }

  int edge_vertex(std::size_t a, std::size_t b, double va, double vb) {
    if (a > b) {
      std::swap(a, b);
      std::swap(va, vb);
    }
    const double t = va / (va - vb);
    // Crossings next to a grid point become that point, shared by every edge
    // meeting there, so the slivers they would form collapse instead.
    if (t < kSnap) return corner_vertex(a);
    if (t > 1.0 - kSnap) return corner_vertex(b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * volume_.voxel_count() + b;
    auto it = edges_.find(key);
    if (it != edges_.end()) return it->second;
    const Point3 pa = volume_.center(a);
    const Point3 pb = volume_.center(b);
    const int id = add_vertex(pa + t * (pb - pa), (1.0 - t) * gradient(a) + t * gradient(b));
    edges_.emplace(key, id);
    return id;
  }

  int corner_vertex(std::size_t a) {
    auto it = corners_.find(a);
    if (it != corners_.end()) return it->second;
    const int id = add_vertex(volume_.center(a), gradient(a));
    corners_.emplace(a, id);
    return id;
  }

  int add_vertex(const Point3& p, const Vec3& g) {
    const int id = static_cast<int>(mesh_.vertices.size());
    mesh_.vertices.push_back(p);
    const double len = g.norm();
    mesh_.normals.push_back(len > 0.0 ? Vec3(g / len) : Vec3::UnitZ());
    return id;
  }

  Vec3 gradient(std::size_t idx) const {
    const auto c = volume_.coords(idx);
    const auto& dims = volume_.dims();
    Vec3 g;
    for (int axis = 0; axis < 3; ++axis) {
      auto lo = c, hi = c;
      if (lo[axis] > 0) --lo[axis];
      if (hi[axis] + 1 < dims[axis]) ++hi[axis];
      const int span = hi[axis] - lo[axis];
      g[axis] = span == 0 ? 0.0
                          : (volume_.value(volume_.index(hi[0], hi[1], hi[2])) -
                             volume_.value(volume_.index(lo[0], lo[1], lo[2]))) /
                                (span * volume_.voxel_size());
    }
    return g;
  }

  void triangle(int a, int b, int c) {
    if (a == b || b == c || a == c) return;
    const auto& v = mesh_.vertices;
    Vec3 n = (v[b] - v[a]).cross(v[c] - v[a]);
    if (0.5 * n.norm() <= 1e-12) return;
    const Vec3 outward = mesh_.normals[a] + mesh_.normals[b] + mesh_.normals[c];
    if (n.dot(outward) < 0.0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
  }

  TriangleMesh finish() {
    std::vector<int> remap(mesh_.vertices.size(), -1);
    TriangleMesh out;
    for (auto& t : mesh_.triangles) {
      for (int& v : t) {
        if (remap[v] < 0) {
          remap[v] = static_cast<int>(out.vertices.size());
          out.vertices.push_back(mesh_.vertices[v]);
          out.normals.push_back(mesh_.normals[v]);
        }
        v = remap[v];
      }
    }
    out.triangles = std::move(mesh_.triangles);
    return out;
  }

  const TsdfVolume& volume_;
  TriangleMesh mesh_;
  std::unordered_map<std::uint64_t, int> edges_;
  std::unordered_map<std::size_t, int> corners_;
};

}  // namespace

TsdfVolume::TsdfVolume(const Point3& origin, double voxel_size, std::array<int, 3> dims,
                       double truncation, float max_weight)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims), truncation_(truncation),
      max_weight_(max_weight) {
  if (voxel_size <= 0.0 || truncation <= 0.0 || max_weight <= 0.0f || dims[0] <= 0 ||
      dims[1] <= 0 || dims[2] <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "invalid volume parameters");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  values_.assign(n, 1.0f);
  weights_.assign(n, 0.0f);
}

TsdfVolume TsdfVolume::enclosing(const Aabb& box, const VolumeConfig& config) {
  if (!box.valid()) throw Error(ErrorKind::kInvalidArgument, "empty bounding box");
  const double mu = config.truncation_voxels * config.voxel_size;
  const Vec3 pad = (config.margin * box.extent()).cwiseMax(Vec3::Constant(2.0 * mu));
  const Point3 lo = box.lo - pad;
  const Vec3 size = box.extent() + 2.0 * pad;
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil(size[a] / config.voxel_size)) + 1;
  return TsdfVolume(lo, config.voxel_size, dims, mu, config.max_weight);
}

std::array<int, 3> TsdfVolume::coords(std::size_t idx) const {
  const int i = static_cast<int>(idx % dims_[0]);
  const std::size_t rest = idx / dims_[0];
  return {i, static_cast<int>(rest % dims_[1]), static_cast<int>(rest / dims_[1])};
}

Point3 TsdfVolume::center(std::size_t idx) const {
  const auto c = coords(idx);
  return center(c[0], c[1], c[2]);
}

bool TsdfVolume::integrate_sample(std::size_t idx, double sdf) {
  if (sdf < -truncation_) return false;
  // Rounding the sample first keeps the average symmetric in sample order.
  const double sample = static_cast<float>(std::min(1.0, sdf / truncation_));
  const double w = weights_[idx];
  values_[idx] = static_cast<float>((values_[idx] * w + sample) / (w + 1.0));
  weights_[idx] = std::min(static_cast<float>(w + 1.0), max_weight_);
  return true;
}

void TsdfVolume::set(std::size_t idx, float value, float weight) {
  values_[idx] = std::clamp(value, -1.0f, 1.0f);
  weights_[idx] = std::clamp(weight, 0.0f, max_weight_);
}

VoxelInfluenceCache cache_voxel_influences(const TsdfVolume& volume, const DeformationGraph& graph) {
  VoxelInfluenceCache cache;
  cache.node_count = graph.node_count();
  NodeInfluence inf;
  for (std::size_t idx = 0; idx < volume.voxel_count(); ++idx) {
    if (!graph.covered_influence(volume.center(idx), inf)) continue;
    VoxelInfluenceCache::Entry e;
    e.node.fill(-1);
    e.weight.fill(0.0f);
    for (int k = 0; k < inf.count; ++k) {
      e.node[k] = inf.node[k];
      e.weight[k] = static_cast<float>(inf.weight[k]);
    }
    cache.voxels.push_back(static_cast<std::uint32_t>(idx));
    cache.entries.push_back(e);
  }
  return cache;
}

void integrate_frame(TsdfVolume& volume, const DepthImage& depth, const Intrinsics& intrinsics) {
  intrinsics.validate();
  for (std::size_t idx = 0; idx < volume.voxel_count(); ++idx) {
    integrate_point(volume, idx, volume.center(idx), depth, intrinsics);
  }
}

void integrate_frame(TsdfVolume& volume, const DepthImage& depth, const Intrinsics& intrinsics,
                     const DeformationGraph& graph, const VoxelInfluenceCache* cache) {
  intrinsics.validate();
  VoxelInfluenceCache local;
  if (!cache || cache->node_count != graph.node_count()) {
    local = cache_voxel_influences(volume, graph);
    cache = &local;
  }
  const auto& transforms = graph.transforms();
  for (std::size_t n = 0; n < cache->voxels.size(); ++n) {
    const std::size_t idx = cache->voxels[n];
    const auto& e = cache->entries[n];
    const Point3 x = volume.center(idx);
    Point3 p = Point3::Zero();
    double total = 0.0;
    for (int k = 0; k < kMaxWarpNeighbors && e.node[k] >= 0; ++k) {
      p += static_cast<double>(e.weight[k]) * transforms[e.node[k]].apply(x);
      total += e.weight[k];
    }
    integrate_point(volume, idx, p / total, depth, intrinsics);
  }
}

TriangleMesh extract_mesh(const TsdfVolume& volume) {
  TriangleMesh mesh = Extractor(volume).run();
  if (mesh.triangles.empty()) throw Error(ErrorKind::kEmptySurface, "volume has no zero crossing");
  return mesh;
}

}  // namespace puppetrack
