#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "puppetrack/geom.hpp"

namespace puppetrack {

using Triangle = std::array<int, 3>;

/// Indexed triangle mesh. `normals` is either empty or one per vertex.
struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<Vec3> normals;
  std::vector<Triangle> triangles;

  bool empty() const { return vertices.empty(); }
};

struct Aabb {
  Point3 lo = Point3::Constant(1e300);
  Point3 hi = Point3::Constant(-1e300);

  void grow(const Point3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
  Vec3 extent() const { return hi - lo; }
  double diagonal() const { return valid() ? extent().norm() : 0.0; }
};

Aabb bounding_box(const std::vector<Point3>& points);
double surface_area(const TriangleMesh& mesh);
Vec3 triangle_normal(const TriangleMesh& mesh, int t);
/// Area-weighted vertex normals; isolated vertices get +z.
std::vector<Vec3> vertex_normals(const std::vector<Point3>& vertices,
                                 const std::vector<Triangle>& triangles);
/// True iff every undirected edge is shared by exactly two triangles.
bool is_closed(const TriangleMesh& mesh);
double mean_edge_length(const TriangleMesh& mesh);

/// Wavefront OBJ (v / vn / f). Fixed-precision output keeps files
/// byte-reproducible.
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace puppetrack
