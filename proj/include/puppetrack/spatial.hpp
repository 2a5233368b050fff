#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "puppetrack/geom.hpp"

namespace puppetrack {

struct Neighbor {
  int index = -1;
  double distance2 = 0.0;
};

/// Static 3-d tree over a point set. Ties are broken by the lower index so
/// query results do not depend on traversal order.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Point3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  Neighbor nearest(const Point3& q) const;
  /// Up to k nearest neighbors sorted by (distance, index).
  void knn(const Point3& q, int k, std::vector<Neighbor>& out) const;
  std::vector<Neighbor> knn(const Point3& q, int k) const;
  /// All points within `radius`, sorted by (distance, index).
  void radius_search(const Point3& q, double radius, std::vector<Neighbor>& out) const;

 private:
  struct Node {
    int begin = 0, end = 0;  // range into order_
    int left = -1, right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  int build(int begin, int end, int depth);

  std::vector<Point3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

struct ClosestPoint {
  int triangle = -1;
  Point3 point = Point3::Zero();
  double distance2 = 0.0;
};

/// Closest point on triangle abc to p.
Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c);

/// Bounding volume hierarchy over triangles for closest-point queries.
class TriangleBvh {
 public:
  TriangleBvh() = default;
  TriangleBvh(std::span<const Point3> vertices, std::span<const std::array<int, 3>> triangles);

  bool empty() const { return triangles_.empty(); }
  ClosestPoint closest(const Point3& q) const;

 private:
  struct Box {
    Point3 lo = Point3::Constant(1e300);
    Point3 hi = Point3::Constant(-1e300);
    void grow(const Point3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    void grow(const Box& b) {
      lo = lo.cwiseMin(b.lo);
      hi = hi.cwiseMax(b.hi);
    }
    double distance2(const Point3& p) const {
      const Point3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
      return d.squaredNorm();
    }
  };
  struct Node {
    Box box;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };

  int build(int begin, int end);

  std::vector<Point3> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<int> order_;
  std::vector<Box> tri_boxes_;
  std::vector<Point3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace puppetrack
