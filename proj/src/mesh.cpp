#include "puppetrack/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "puppetrack/error.hpp"

namespace puppetrack {

Aabb bounding_box(const std::vector<Point3>& points) {
  Aabb box;
  for (const auto& p : points) box.grow(p);
  return box;
}

Vec3 triangle_normal(const TriangleMesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                     .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
}

double surface_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& tri : mesh.triangles) {
    area += 0.5 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                      .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]])
                      .norm();
  }
  return area;
}

std::vector<Vec3> vertex_normals(const std::vector<Point3>& vertices,
                                 const std::vector<Triangle>& triangles) {
  std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
  for (const auto& tri : triangles) {
    const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
    for (int k = 0; k < 3; ++k) normals[tri[k]] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
  return normals;
}

bool is_closed(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  if (edges.empty()) return false;
  for (const auto& [edge, count] : edges) {
    if (count != 2) return false;
  }
  return true;
}

double mean_edge_length(const TriangleMesh& mesh) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      sum += (mesh.vertices[tri[k]] - mesh.vertices[tri[(k + 1) % 3]]).norm();
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  for (const auto& v : mesh.vertices) std::fprintf(f, "v %.7f %.7f %.7f\n", v.x(), v.y(), v.z());
  for (const auto& n : mesh.normals) std::fprintf(f, "vn %.6f %.6f %.6f\n", n.x(), n.y(), n.z());
  const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
  for (const auto& t : mesh.triangles) {
    if (with_normals) {
      std::fprintf(f, "f %d//%d %d//%d %d//%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1,
                   t[2] + 1, t[2] + 1);
    } else {
      std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw Error(ErrorKind::kIoFailure, "error writing " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot read " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    if (line.size() < 2) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Point3 p;
      ss >> p.x() >> p.y() >> p.z();
      mesh.vertices.push_back(p);
    } else if (tag == "vn") {
      Vec3 n;
      ss >> n.x() >> n.y() >> n.z();
      mesh.normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      // Fan-triangulate polygons.
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
  }
  const int n = static_cast<int>(mesh.vertices.size());
  for (const auto& t : mesh.triangles) {
    for (int k : t) {
      if (k < 0 || k >= n) throw Error(ErrorKind::kIoFailure, "face index out of range in " + path.string());
    }
  }
  if (mesh.normals.size() != mesh.vertices.size()) mesh.normals.clear();
  return mesh;
}

}  // namespace puppetrack
