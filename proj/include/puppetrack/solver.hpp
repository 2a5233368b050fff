#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "puppetrack/correspond.hpp"
#include "puppetrack/defgraph.hpp"
#include "puppetrack/skeleton.hpp"

namespace puppetrack {

struct EnergyWeights {
  double data = 1.0;
  double arap = 5.0;
  double skeleton = 1.0;
  double reg = 2.0;

  /// Throws kInvalidArgument unless all weights are >= 0 and one is > 0.
  void validate() const;
};

/// Unweighted terms plus the weighted total. Terms with zero weight are not
/// evaluated and read 0.
struct EnergyTerms {
  double data = 0.0;
  double arap = 0.0;
  double skeleton = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

/// Canonical surface being tracked, with its warp influences and skinning
/// weights precomputed against the graph and puppet.
struct TrackingSurface {
  std::vector<Point3> vertices;
  std::vector<Vec3> normals;
  std::vector<NodeInfluence> influences;
  std::vector<SkinWeights> skin;
};

TrackingSurface make_tracking_surface(std::vector<Point3> vertices, std::vector<Vec3> normals,
                                      const DeformationGraph& graph, const PuppetMesh& rest,
                                      const KdTree& rest_index);

/// Everything the energy depends on besides the unknowns. `graph` provides
/// node positions, ARAP neighborhoods and node skinning weights; its stored
/// transforms are ignored in favor of the state's.
struct TrackingModel {
  const DeformationGraph* graph = nullptr;
  const SkeletonTopology* topology = nullptr;
  const TrackingSurface* surface = nullptr;

  int node_count() const { return graph->node_count(); }
  int parameter_count() const { return 6 * node_count() + topology->parameter_count(); }
};

/// Unknowns: one rigid transform per graph node and the skeleton pose.
struct SolveState {
  std::vector<RigidTransform> node_transforms;
  Pose pose;
  int iteration = 0;
};

/// Increment layout: per node [translation, rotation about T_i p_i], then the
/// pose increment of apply_pose_increment.
SolveState apply_increment(const TrackingModel& model, const SolveState& state,
                           const Eigen::VectorXd& delta);


/// Graph-warped and skeleton-warped surface for a state.
struct WarpedSurface {
  std::vector<Point3> graph_points;
  std::vector<Vec3> graph_normals;
  std::vector<Point3> skeleton_points;
  std::vector<Vec3> skeleton_normals;
};
WarpedSurface warp_surface(const TrackingModel& model, const SolveState& state);

/// Weighted four-term energy:
///   data     sum_C |n~ . (v~ - u)|^2             (graph-warped source)
///   arap     sum_i sum_j |(v~_i - v~_j) - R_i (p_i - p_j)|^2
///   skeleton sum_C |n^ . (v^ - u)|^2             (skeleton-warped source)
///   reg      sum_i |v~_i - v^_i|^2               (graph nodes)
/// With huber_delta > 0 the data and skeleton residuals use the Huber cost
/// (r^2 inside delta, 2 delta |r| - delta^2 outside).
EnergyTerms evaluate_energy(const TrackingModel& model, const SolveState& state,
                            const CorrespondenceSet& correspondences, const EnergyWeights& weights,
                            double huber_delta = 0.0);

struct SolverConfig {
  EnergyWeights weights;
  int max_iterations = 4;
  double initial_lambda = 1e-4;
  int max_retries = 10;
  double huber_delta = 0.01;  // 0 disables robust weighting
  bool alternate = false;     // solve graph and pose in alternation
  AssociationThresholds thresholds;
  double energy_floor = 1e-10;
  double relative_tolerance = 1e-9;
};

struct FrameData {
  const TargetCloud* cloud = nullptr;
  const Intrinsics* intrinsics = nullptr;
  /// Used in place of projective association on the first iteration.
  const CorrespondenceSet* first_iteration_correspondences = nullptr;
};

struct IterationRecord {
  int iteration = 0;
  EnergyTerms before;
  EnergyTerms after;
  int correspondences = 0;
  double lambda = 0.0;
  int retries = 0;
  bool accepted = false;
};

struct SolveReport {
  std::vector<IterationRecord> iterations;
  int final_correspondences = 0;
  bool converged = false;
  double wall_seconds = 0.0;
};

using IterationCallback = std::function<void(int iteration, const SolveState& state)>;

/// Damped Gauss-Newton (Levenberg-Marquardt) over node transforms and pose.
/// Each outer iteration re-associates (except when first-iteration pairs are
/// given), linearizes, and accepts the step only if the objective on that
/// iteration's correspondences does not increase.
SolveState solve_gauss_newton(const TrackingModel& model, const SolveState& initial,
                              const FrameData& frame, const SolverConfig& config,
                              SolveReport* report = nullptr,
                              const IterationCallback& on_iteration = {});

/// Max relative deviation of analytic residual Jacobians from central finite
/// differences, per term.
struct JacobianAudit {
  double data = 0.0;
  double arap = 0.0;
  double skeleton = 0.0;
  double reg = 0.0;

  double max() const { return std::max(std::max(data, arap), std::max(skeleton, reg)); }
};

JacobianAudit check_jacobian(const TrackingModel& model, const SolveState& state,
                             const CorrespondenceSet& correspondences, double step = 1e-6);

/// Dense residual vector and analytic Jacobian of one term; exposed for
/// tests and diagnostics. term: 0 data, 1 arap, 2 skeleton, 3 reg.
void term_jacobian(const TrackingModel& model, const SolveState& state,
                   const CorrespondenceSet& correspondences, int term, Eigen::VectorXd& residuals,
                   Eigen::MatrixXd* jacobian);

}  // namespace puppetrack
