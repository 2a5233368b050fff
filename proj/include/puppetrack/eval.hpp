#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "puppetrack/mesh.hpp"

namespace puppetrack {

inline constexpr double kDefaultOutlierThreshold = 0.005;  // meters

struct MaeResult {
  double mean_mm = 0.0;
  double std_mm = 0.0;
};

/// Per reconstruction vertex, |n . (v - q)| with q the closest point on the
/// ground truth and n that triangle's geometric normal; mean and population
/// std in millimeters. Throws kEmptyMesh.
MaeResult mae_point_to_plane(const TriangleMesh& recon, const TriangleMesh& gt);

/// Barycentric lattice samples, at least six per triangle (vertices and edge
/// midpoints) and finer on triangles longer than the mean edge.
std::vector<Point3> sample_surface(const TriangleMesh& mesh);

/// max over samples of `a` of the distance to the surface of `b` (meters).
double directed_hausdorff(const TriangleMesh& a, const TriangleMesh& b);
/// Symmetric Hausdorff distance (meters). Throws kEmptyMesh.
double hausdorff(const TriangleMesh& a, const TriangleMesh& b);

/// Reconstruction vertices farther than `threshold` from the ground truth.
int outlier_count(const TriangleMesh& recon, const TriangleMesh& gt,
                  double threshold = kDefaultOutlierThreshold);

struct FrameMetrics {
  int frame = 0;
  double mae_mm = 0.0;
  double std_mm = 0.0;
  double hausdorff = 0.0;  // meters
  int outliers = 0;
  int n_vertices = 0;
};

FrameMetrics evaluate_frame(int frame, const TriangleMesh& recon, const TriangleMesh& gt,
                            double outlier_threshold = kDefaultOutlierThreshold);

/// frame,mae_mm,std_mm,hausdorff,outliers,n_vertices
std::string metrics_csv(const std::vector<FrameMetrics>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<FrameMetrics>& rows);

}  // namespace puppetrack
