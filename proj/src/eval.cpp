#include "puppetrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "puppetrack/error.hpp"
#include "puppetrack/spatial.hpp"

namespace puppetrack {
namespace {

// Distances this small are rounding noise from coplanar queries.
constexpr double kRoundingFloor = 1e-12;

void require_mesh(const TriangleMesh& mesh, const char* what) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) {
    throw Error(ErrorKind::kEmptyMesh, std::string(what) + " mesh is empty");
  }
}

TriangleBvh make_bvh(const TriangleMesh& mesh) { return TriangleBvh(mesh.vertices, mesh.triangles); }

}  // namespace

MaeResult mae_point_to_plane(const TriangleMesh& recon, const TriangleMesh& gt) {
  require_mesh(recon, "reconstruction");
  require_mesh(gt, "ground-truth");
  const TriangleBvh bvh = make_bvh(gt);
  std::vector<double> d(recon.vertices.size());
  for (std::size_t i = 0; i < recon.vertices.size(); ++i) {
    const ClosestPoint c = bvh.closest(recon.vertices[i]);
    const Vec3 n = triangle_normal(gt, c.triangle);
    d[i] = std::abs(n.dot(recon.vertices[i] - c.point)) * 1000.0;
  }
  double sum = 0.0;
  for (double v : d) sum += v;
  MaeResult r;
  r.mean_mm = sum / d.size();
  double var = 0.0;
  for (double v : d) var += (v - r.mean_mm) * (v - r.mean_mm);
  r.std_mm = std::sqrt(var / d.size());
  return r;
}

std::vector<Point3> sample_surface(const TriangleMesh& mesh) {
  const double spacing = std::max(0.5 * mean_edge_length(mesh), 1e-9);
  std::vector<Point3> out;
  for (const auto& t : mesh.triangles) {
    const Point3& a = mesh.vertices[t[0]];
    const Point3& b = mesh.vertices[t[1]];
    const Point3& c = mesh.vertices[t[2]];
    const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    const int level = std::clamp(static_cast<int>(std::ceil(longest / spacing)), 2, 64);
    for (int i = 0; i <= level; ++i) {
      for (int j = 0; i + j <= level; ++j) {
        const double u = static_cast<double>(i) / level, v = static_cast<double>(j) / level;
        out.push_back((1.0 - u - v) * a + u * b + v * c);
      }
    }
  }
  return out;
}

double directed_hausdorff(const TriangleMesh& a, const TriangleMesh& b) {
  require_mesh(a, "first");
  require_mesh(b, "second");
  const TriangleBvh bvh = make_bvh(b);
  double worst = 0.0;
  for (const Point3& p : sample_surface(a)) worst = std::max(worst, bvh.closest(p).distance2);
  const double d = std::sqrt(worst);
  return d < kRoundingFloor ? 0.0 : d;
}

double hausdorff(const TriangleMesh& a, const TriangleMesh& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

int outlier_count(const TriangleMesh& recon, const TriangleMesh& gt, double threshold) {
  if (threshold <= 0.0) throw Error(ErrorKind::kInvalidArgument, "outlier threshold must be positive");
  require_mesh(recon, "reconstruction");
  require_mesh(gt, "ground-truth");
  const TriangleBvh bvh = make_bvh(gt);
  const double t2 = threshold * threshold;
  int count = 0;
  for (const Point3& v : recon.vertices) count += bvh.closest(v).distance2 > t2;
  return count;
}

FrameMetrics evaluate_frame(int frame, const TriangleMesh& recon, const TriangleMesh& gt,
                            double outlier_threshold) {
  FrameMetrics m;
  m.frame = frame;
  const MaeResult mae = mae_point_to_plane(recon, gt);
  m.mae_mm = mae.mean_mm;
  m.std_mm = mae.std_mm;
  m.hausdorff = hausdorff(recon, gt);
  m.outliers = outlier_count(recon, gt, outlier_threshold);
  m.n_vertices = static_cast<int>(recon.vertices.size());
  return m;
}

std::string metrics_csv(const std::vector<FrameMetrics>& rows) {
  std::string out = "frame,mae_mm,std_mm,hausdorff,outliers,n_vertices\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.9f,%d,%d\n", r.frame, r.mae_mm, r.std_mm,
                  r.hausdorff, r.outliers, r.n_vertices);
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<FrameMetrics>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  out << metrics_csv(rows);
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed: " + path.string());
}

}  // namespace puppetrack
