#include "puppetrack/spatial.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace puppetrack {

namespace {

constexpr int kLeafSize = 12;

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance2 < b.distance2 || (a.distance2 == b.distance2 && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::vector<Point3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()), 0);
  }
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Point3 lo = Point3::Constant(std::numeric_limits<double>::max());
  Point3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  (void)depth;
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

Neighbor KdTree::nearest(const Point3& q) const {
  std::vector<Neighbor> out;
  knn(q, 1, out);
  return out.empty() ? Neighbor{} : out.front();
}

std::vector<Neighbor> KdTree::knn(const Point3& q, int k) const {
  std::vector<Neighbor> out;
  knn(q, k, out);
  return out;
}

void KdTree::knn(const Point3& q, int k, std::vector<Neighbor>& out) const {
  out.clear();
  if (points_.empty() || k <= 0) return;
  // `out` is kept sorted; worst candidate at the back.
  auto worst = [&]() {
    return static_cast<int>(out.size()) < k ? std::numeric_limits<double>::infinity()
                                            : out.back().distance2;
  };
  int stack[128];
  double stack_d[128];
  int top = 0;
  stack[top] = 0;
  stack_d[top++] = 0.0;
  while (top > 0) {
    --top;
    const int id = stack[top];
    if (stack_d[top] > worst()) continue;
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
        if (static_cast<int>(out.size()) < k) {
          out.insert(std::upper_bound(out.begin(), out.end(), cand, neighbor_less), cand);
        } else if (neighbor_less(cand, out.back())) {
          out.pop_back();
          out.insert(std::upper_bound(out.begin(), out.end(), cand, neighbor_less), cand);
        }
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    const int near_child = diff < 0.0 ? n.left : n.right;
    const int far_child = diff < 0.0 ? n.right : n.left;
    // Push far first so near is processed first. Points equal to the split
    // can sit on either side, so the far bound is inclusive.
    stack[top] = far_child;
    stack_d[top++] = diff * diff;
    stack[top] = near_child;
    stack_d[top++] = 0.0;
  }
}

void KdTree::radius_search(const Point3& q, double radius, std::vector<Neighbor>& out) const {
  out.clear();
  if (points_.empty()) return;
  const double r2 = radius * radius;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx, d2});
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    if (diff <= radius) stack[top++] = n.left;
    if (diff >= -radius) stack[top++] = n.right;
  }
  std::sort(out.begin(), out.end(), neighbor_less);
}

Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return a + v * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return a + ab * v + ac * w;
}

TriangleBvh::TriangleBvh(std::span<const Point3> vertices,
                         std::span<const std::array<int, 3>> triangles)
    : vertices_(vertices.begin(), vertices.end()),
      triangles_(triangles.begin(), triangles.end()) {
  const int n = static_cast<int>(triangles_.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  tri_boxes_.resize(n);
  centroids_.resize(n);
  for (int t = 0; t < n; ++t) {
    const auto& tri = triangles_[t];
    for (int k = 0; k < 3; ++k) tri_boxes_[t].grow(vertices_[tri[k]]);
    centroids_[t] = (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
  }
  if (n > 0) {
    nodes_.reserve(2 * n / 4 + 2);
    build(0, n);
  }
}

int TriangleBvh::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Box box, cbox;
  for (int i = begin; i < end; ++i) {
    box.grow(tri_boxes_[order_[i]]);
    cbox.grow(centroids_[order_[i]]);
  }
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4) return id;
  int axis = 0;
  (cbox.hi - cbox.lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double ca = centroids_[a][axis], cb = centroids_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

ClosestPoint TriangleBvh::closest(const Point3& q) const {
  ClosestPoint best;
  best.distance2 = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (n.box.distance2(q) > best.distance2) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int t = order_[i];
        const auto& tri = triangles_[t];
        const Point3 c = closest_point_on_triangle(q, vertices_[tri[0]], vertices_[tri[1]],
                                                   vertices_[tri[2]]);
        const double d2 = (c - q).squaredNorm();
        if (d2 < best.distance2 || (d2 == best.distance2 && t < best.triangle)) {
          best = {t, c, d2};
        }
      }
      continue;
    }
    const double dl = nodes_[n.left].box.distance2(q);
    const double dr = nodes_[n.right].box.distance2(q);
    if (dl < dr) {
      stack[top++] = n.right;
      stack[top++] = n.left;
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return best;
}

}  // namespace puppetrack
