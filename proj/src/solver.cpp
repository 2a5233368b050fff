#include "puppetrack/solver.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "puppetrack/error.hpp"

namespace puppetrack {
namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

enum Term { kData = 0, kArap = 1, kSkeleton = 2, kReg = 3 };

struct JacobianRow {
  double residual = 0.0;
  int node_count = 0;
  std::array<int, 4> nodes{};
  std::array<Vec6, 4> dnode;
  bool has_pose = false;
  Eigen::VectorXd dpose;
};

struct StateCache {
  Kinematics kin;
  std::vector<Point3> centers;  // T_i p_i
};

StateCache make_cache(const TrackingModel& model, const SolveState& state) {
  StateCache cache;
  cache.kin = forward_kinematics(*model.topology, state.pose);
  const auto& positions = model.graph->positions();
  cache.centers.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    cache.centers[i] = state.node_transforms[i].apply(positions[i]);
  }
  return cache;
}

double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  if (delta <= 0.0 || a <= delta) return r * r;
  return 2.0 * delta * a - delta * delta;
}

double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  if (delta <= 0.0 || a <= delta) return 1.0;
  return delta / a;
}

int pose_column(int joint) { return joint == 0 ? 3 : 6 + 3 * (joint - 1); }

// Calls emit(row) for every residual of `term`. With want_jacobian false only
// row.residual is meaningful.
template <typename Emit>
void for_each_row(const TrackingModel& model, const SolveState& state, const StateCache& cache,
                  const CorrespondenceSet& correspondences, int term, bool want_jacobian,
                  Emit&& emit) {
  const auto& topology = *model.topology;
  const auto& graph = *model.graph;
  const auto& surface = *model.surface;
  const int pose_params = topology.parameter_count();
  JacobianRow row;
  if (want_jacobian) row.dpose.resize(pose_params);

  switch (term) {
    case kData:
      for (const auto& c : correspondences) {
        const auto& inf = surface.influences[c.source];
        const Point3& v = surface.vertices[c.source];
        const Vec3& n = surface.normals[c.source];
        Point3 warped = Point3::Zero();
        Vec3 m = Vec3::Zero();
        for (int k = 0; k < inf.count; ++k) {
          const auto& t = state.node_transforms[inf.node[k]];
          warped += inf.weight[k] * t.apply(v);
          m += inf.weight[k] * t.apply_normal(n);
        }
        const double norm = m.norm();
        if (norm < 1e-12) continue;
        const Vec3 normal = m / norm;
        const Vec3 d = warped - c.target;
        const double sw = std::sqrt(c.weight);
        row.residual = sw * normal.dot(d);
        row.node_count = 0;
        row.has_pose = false;
        if (want_jacobian) {
          const Vec3 g = (d - normal * normal.dot(d)) / norm;
          row.node_count = inf.count;
          for (int k = 0; k < inf.count; ++k) {
            const int node = inf.node[k];
            const auto& t = state.node_transforms[node];
            const double w = sw * inf.weight[k];
            const Vec3 arm = t.apply(v) - cache.centers[node];
            row.nodes[k] = node;
            row.dnode[k].head<3>() = w * normal;
            row.dnode[k].tail<3>() = w * (arm.cross(normal) + t.apply_normal(n).cross(g));
          }
        }
        emit(row);
      }
      break;

    case kArap: {
      const auto& positions = graph.positions();
      const auto& neighbors = graph.neighbors();
      for (int i = 0; i < graph.node_count(); ++i) {
        const Mat3& r = state.node_transforms[i].rotation;
        for (int j : neighbors[i]) {
          const Vec3 rest = r * (positions[i] - positions[j]);
          const Vec3 res = (cache.centers[i] - cache.centers[j]) - rest;
          const Mat3 rest_skew = skew(rest);
          for (int a = 0; a < 3; ++a) {
            row.residual = res[a];
            row.has_pose = false;
            row.node_count = 0;
            if (want_jacobian) {
              row.node_count = 2;
              row.nodes[0] = i;
              row.nodes[1] = j;
              row.dnode[0].setZero();
              row.dnode[1].setZero();
              row.dnode[0][a] = 1.0;
              row.dnode[0].tail<3>() = rest_skew.row(a).transpose();
              row.dnode[1][a] = -1.0;
            }
            emit(row);
          }
        }
      }
      break;
    }

    case kSkeleton:
      for (const auto& c : correspondences) {
        const auto& weights = surface.skin[c.source];
        const Point3& v = surface.vertices[c.source];
        const Vec3& n = surface.normals[c.source];
        const Point3 p = skin_point(topology, cache.kin, weights, v);
        const Vec3 m = skin_direction(topology, cache.kin, weights, n);
        const double norm = m.norm();
        if (norm < 1e-12) continue;
        const Vec3 normal = m / norm;
        const Vec3 d = p - c.target;
        const double sw = std::sqrt(c.weight);
        row.residual = sw * normal.dot(d);
        row.node_count = 0;
        row.has_pose = want_jacobian;
        if (want_jacobian) {
          const Vec3 g = (d - normal * normal.dot(d)) / norm;
          row.dpose.setZero();
          double total = 0.0;
          for (const auto& bw : weights) total += bw.weight;
          row.dpose.head<3>() = sw * total * normal;
          for (const auto& bw : weights) {
            const auto& s = cache.kin.bone_transform(topology, bw.bone);
            const Point3 pb = s.apply(v);
            const Vec3 nb = s.apply_normal(n);
            const double w = sw * bw.weight;
            for (int k = topology.bone(bw.bone).head; k >= 0; k = topology.joint(k).parent) {
              const Vec3 arm = pb - cache.kin.joint_positions[k];
              row.dpose.segment<3>(pose_column(k)) += w * (arm.cross(normal) + nb.cross(g));
            }
          }
        }
        emit(row);
      }
      break;

    case kReg: {
      const auto& positions = graph.positions();
      const auto& skins = graph.skin_weights();
      for (int i = 0; i < graph.node_count(); ++i) {
        const Point3 skinned = skin_point(topology, cache.kin, skins[i], positions[i]);
        const Vec3 res = cache.centers[i] - skinned;
        Eigen::MatrixXd jp;
        if (want_jacobian) jp = skinned_point_jacobian(topology, cache.kin, skins[i], positions[i]);
        for (int a = 0; a < 3; ++a) {
          row.residual = res[a];
          row.node_count = 0;
          row.has_pose = false;
          if (want_jacobian) {
            row.node_count = 1;
            row.nodes[0] = i;
            row.dnode[0].setZero();
            row.dnode[0][a] = 1.0;
            row.has_pose = true;
            row.dpose = -jp.row(a).transpose();
          }
          emit(row);
        }
      }
      break;
    }
  }
}

double term_weight(const EnergyWeights& w, int term) {
  switch (term) {
    case kData: return w.data;
    case kArap: return w.arap;
    case kSkeleton: return w.skeleton;
    default: return w.reg;
  }
}

bool is_robust(int term) { return term == kData || term == kSkeleton; }

EnergyTerms energy_with_cache(const TrackingModel& model, const SolveState& state,
                              const StateCache& cache, const CorrespondenceSet& correspondences,
                              const EnergyWeights& weights, double huber_delta) {
  std::array<double, 4> sums{};
  for (int term = 0; term < 4; ++term) {
    if (term_weight(weights, term) <= 0.0) continue;
    const double delta = is_robust(term) ? huber_delta : 0.0;
    double sum = 0.0;
    for_each_row(model, state, cache, correspondences, term, false,
                 [&](const JacobianRow& row) { sum += huber_cost(row.residual, delta); });
    sums[term] = sum;
  }
  EnergyTerms e;
  e.data = sums[kData];
  e.arap = sums[kArap];
  e.skeleton = sums[kSkeleton];
  e.reg = sums[kReg];
  e.total = weights.data * e.data + weights.arap * e.arap + weights.skeleton * e.skeleton +
            weights.reg * e.reg;
  return e;
}

std::uint64_t block_key(int a, int b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

// Gauss-Newton normal equations in block form: 6x6 node blocks (lower
// triangle), node-pose coupling and a dense pose block.
struct NormalEquations {
  int nodes = 0;
  int pose_params = 0;
  std::unordered_map<std::uint64_t, int> slot;
  std::vector<std::pair<int, int>> slot_pairs;
  std::vector<Mat6> blocks;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 6>> coupling;  // pose x node
  std::vector<bool> coupled;
  Eigen::MatrixXd pose;
  Eigen::VectorXd gradient;

  NormalEquations(int n, int p)
      : nodes(n), pose_params(p), coupling(n), coupled(n, false),
        pose(Eigen::MatrixXd::Zero(p, p)), gradient(Eigen::VectorXd::Zero(6 * n + p)) {
    for (int i = 0; i < n; ++i) block(i, i);
  }

  Mat6& block(int a, int b) {
    const auto key = block_key(a, b);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, static_cast<int>(blocks.size())).first;
      blocks.push_back(Mat6::Zero());
      slot_pairs.emplace_back(a, b);
    }
    return blocks[it->second];
  }

  void add(const JacobianRow& row, double weight) {
    const double r = row.residual;
    for (int x = 0; x < row.node_count; ++x) {
      const int a = row.nodes[x];
      gradient.segment<6>(6 * a) += weight * r * row.dnode[x];
      for (int y = 0; y < row.node_count; ++y) {
        const int b = row.nodes[y];
        if (a < b) continue;
        block(a, b).noalias() += weight * row.dnode[x] * row.dnode[y].transpose();
      }
    }
    if (row.has_pose) {
      gradient.tail(pose_params) += weight * r * row.dpose;
      pose.selfadjointView<Eigen::Lower>().rankUpdate(row.dpose, weight);
      for (int x = 0; x < row.node_count; ++x) {
        const int a = row.nodes[x];
        if (!coupled[a]) {
          coupling[a] = Eigen::Matrix<double, Eigen::Dynamic, 6>::Zero(pose_params, 6);
          coupled[a] = true;
        }
        coupling[a].noalias() += weight * row.dpose * row.dnode[x].transpose();
      }
    }
  }

  // Lower-triangular sparse matrix. Frozen groups become identity rows.
  Eigen::SparseMatrix<double> assemble(bool freeze_nodes, bool freeze_pose) const {
    const int n = 6 * nodes + pose_params;
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(blocks.size() * 36 + pose_params * pose_params);
    if (freeze_nodes) {
      for (int i = 0; i < 6 * nodes; ++i) triplets.emplace_back(i, i, 1.0);
    } else {
      for (std::size_t s = 0; s < blocks.size(); ++s) {
        const auto [a, b] = slot_pairs[s];
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) {
            if (a == b && c > r) continue;
            const double value = blocks[s](r, c);
            if (value != 0.0 || (a == b && r == c)) triplets.emplace_back(6 * a + r, 6 * b + c, value);
          }
        }
      }
    }
    const int base = 6 * nodes;
    if (freeze_pose) {
      for (int i = 0; i < pose_params; ++i) triplets.emplace_back(base + i, base + i, 1.0);
    } else {
      for (int r = 0; r < pose_params; ++r) {
        for (int c = 0; c <= r; ++c) {
          if (pose(r, c) != 0.0 || r == c) triplets.emplace_back(base + r, base + c, pose(r, c));
        }
      }
    }
    if (!freeze_nodes && !freeze_pose) {
      for (int a = 0; a < nodes; ++a) {
        if (!coupled[a]) continue;
        for (int r = 0; r < pose_params; ++r) {
          for (int c = 0; c < 6; ++c) {
            const double value = coupling[a](r, c);
            if (value != 0.0) triplets.emplace_back(base + r, 6 * a + c, value);
          }
        }
      }
    }
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(triplets.begin(), triplets.end());
    return h;
  }
};

NormalEquations linearize(const TrackingModel& model, const SolveState& state,
                          const StateCache& cache, const CorrespondenceSet& correspondences,
                          const EnergyWeights& weights, double huber_delta) {
  NormalEquations eq(model.node_count(), model.topology->parameter_count());
  for (int term = 0; term < 4; ++term) {
    const double alpha = term_weight(weights, term);
    if (alpha <= 0.0) continue;
    const double delta = is_robust(term) ? huber_delta : 0.0;
    for_each_row(model, state, cache, correspondences, term, true, [&](const JacobianRow& row) {
      eq.add(row, alpha * huber_weight(row.residual, delta));
    });
  }
  return eq;
}

CorrespondenceSet associate(const TrackingModel& model, const SolveState& state,
                            const FrameData& frame, const AssociationThresholds& thresholds) {
  const auto& surface = *model.surface;
  std::vector<Point3> points(surface.vertices.size());
  std::vector<Vec3> normals(surface.vertices.size());
  for (std::size_t v = 0; v < surface.vertices.size(); ++v) {
    const auto& inf = surface.influences[v];
    TransformBlend blend;
    for (int k = 0; k < inf.count; ++k) blend.add(inf.weight[k], state.node_transforms[inf.node[k]]);
    points[v] = blend.apply(surface.vertices[v]);
    normals[v] = blend.apply_normal(surface.normals[v]);
  }
  return projective_associate(points, normals, *frame.cloud, *frame.intrinsics, thresholds);
}

struct StepResult {
  bool accepted = false;
  SolveState state;
  EnergyTerms energy;
  int retries = 0;
};

StepResult damped_step(const TrackingModel& model, const SolveState& state, const StateCache& cache,
                       const CorrespondenceSet& correspondences, const SolverConfig& config,
                       const EnergyTerms& before, double& lambda, bool freeze_nodes,
                       bool freeze_pose) {
  const NormalEquations eq =
      linearize(model, state, cache, correspondences, config.weights, config.huber_delta);
  const Eigen::SparseMatrix<double> h = eq.assemble(freeze_nodes, freeze_pose);
  Eigen::VectorXd g = eq.gradient;
  if (freeze_nodes) g.head(6 * eq.nodes).setZero();
  if (freeze_pose) g.tail(eq.pose_params).setZero();

  const Eigen::VectorXd diag = h.diagonal();
  const double floor = 1e-9 + 1e-6 * diag.cwiseAbs().mean();
  const Eigen::VectorXd scale = diag.cwiseMax(floor);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
  ldlt.analyzePattern(h);

  StepResult result;
  bool solvable = false;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    Eigen::SparseMatrix<double> damped = h;
    for (int i = 0; i < damped.rows(); ++i) damped.coeffRef(i, i) += lambda * scale[i];
    ldlt.factorize(damped);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd delta = ldlt.solve(-g);
      if (delta.allFinite()) {
        solvable = true;
        SolveState candidate = apply_increment(model, state, delta);
        const StateCache candidate_cache = make_cache(model, candidate);
        const EnergyTerms after = energy_with_cache(model, candidate, candidate_cache,
                                                    correspondences, config.weights,
                                                    config.huber_delta);
        if (std::isfinite(after.total) && after.total <= before.total) {
          result.accepted = true;
          result.state = std::move(candidate);
          result.energy = after;
          result.retries = attempt;
          lambda = std::max(lambda * 0.1, 1e-10);
          return result;
        }
      }
    }
    lambda *= 10.0;
  }
  if (!solvable) throw Error(ErrorKind::kSingularSystem, "damped normal equations have no finite solution");
  result.retries = config.max_retries;
  return result;
}

}  // namespace

void EnergyWeights::validate() const {
  const bool nonnegative = data >= 0.0 && arap >= 0.0 && skeleton >= 0.0 && reg >= 0.0;
  if (!nonnegative || data + arap + skeleton + reg <= 0.0) {
    throw Error(ErrorKind::kInvalidArgument, "energy weights must be non-negative and not all zero");
  }
}

TrackingSurface make_tracking_surface(std::vector<Point3> vertices, std::vector<Vec3> normals,
                                      const DeformationGraph& graph, const PuppetMesh& rest,
                                      const KdTree& rest_index) {
  if (vertices.size() != normals.size()) {
    throw Error(ErrorKind::kInvalidArgument, "vertex and normal counts differ");
  }
  TrackingSurface surface;
  surface.influences.reserve(vertices.size());
  surface.skin.reserve(vertices.size());
  for (const auto& v : vertices) {
    surface.influences.push_back(graph.influence(v));
    surface.skin.push_back(rest.weights[rest_index.nearest(v).index]);
  }
  surface.vertices = std::move(vertices);
  surface.normals = std::move(normals);
  return surface;
}

SolveState apply_increment(const TrackingModel& model, const SolveState& state,
                           const Eigen::VectorXd& delta) {
  const int n = model.node_count();
  if (delta.size() != model.parameter_count()) {
    throw Error(ErrorKind::kInvalidArgument, "increment size mismatch");
  }
  SolveState out = state;
  const auto& positions = model.graph->positions();
  for (int i = 0; i < n; ++i) {
    const Vec6 d = delta.segment<6>(6 * i);
    const auto& t = state.node_transforms[i];
    const Point3 center = t.apply(positions[i]);
    const Mat3 e = exp_so3(d.tail<3>());
    out.node_transforms[i].rotation = e * t.rotation;
    out.node_transforms[i].translation = center + e * (t.translation - center) + d.head<3>();
  }
  const Kinematics kin = forward_kinematics(*model.topology, state.pose);
  out.pose = apply_pose_increment(*model.topology, state.pose, kin,
                                  delta.tail(model.topology->parameter_count()));
  return out;
}

WarpedSurface warp_surface(const TrackingModel& model, const SolveState& state) {
  const auto& surface = *model.surface;
  const Kinematics kin = forward_kinematics(*model.topology, state.pose);
  WarpedSurface out;
  const std::size_t count = surface.vertices.size();
  out.graph_points.resize(count);
  out.graph_normals.resize(count);
  out.skeleton_points.resize(count);
  out.skeleton_normals.resize(count);
  for (std::size_t v = 0; v < count; ++v) {
    const auto& inf = surface.influences[v];
    TransformBlend blend;
    for (int k = 0; k < inf.count; ++k) blend.add(inf.weight[k], state.node_transforms[inf.node[k]]);
    out.graph_points[v] = blend.apply(surface.vertices[v]);
    out.graph_normals[v] = blend.apply_normal(surface.normals[v]);
    out.skeleton_points[v] = skin_point(*model.topology, kin, surface.skin[v], surface.vertices[v]);
    out.skeleton_normals[v] =
        skin_direction(*model.topology, kin, surface.skin[v], surface.normals[v]).normalized();
  }
  return out;
}

EnergyTerms evaluate_energy(const TrackingModel& model, const SolveState& state,
                            const CorrespondenceSet& correspondences, const EnergyWeights& weights,
                            double huber_delta) {
  weights.validate();
  const StateCache cache = make_cache(model, state);
  return energy_with_cache(model, state, cache, correspondences, weights, huber_delta);
}

SolveState solve_gauss_newton(const TrackingModel& model, const SolveState& initial,
                              const FrameData& frame, const SolverConfig& config,
                              SolveReport* report, const IterationCallback& on_iteration) {
  const auto start = std::chrono::steady_clock::now();
  config.weights.validate();
  if (static_cast<int>(initial.node_transforms.size()) != model.node_count()) {
    throw Error(ErrorKind::kInvalidArgument, "state does not match the graph");
  }
  SolveReport local;
  SolveReport& out = report ? *report : local;
  out = SolveReport{};

  SolveState state = initial;
  double lambda = config.initial_lambda;
  for (int it = 1; it <= config.max_iterations; ++it) {
    CorrespondenceSet correspondences;
    if (it == 1 && frame.first_iteration_correspondences) {
      correspondences = *frame.first_iteration_correspondences;
    } else {
      correspondences = associate(model, state, frame, config.thresholds);
    }
    if (correspondences.empty()) {
      throw Error(ErrorKind::kNoCorrespondences, "no correspondences in iteration " + std::to_string(it));
    }
    out.final_correspondences = static_cast<int>(correspondences.size());

    IterationRecord record;
    record.iteration = it;
    record.correspondences = static_cast<int>(correspondences.size());
    StateCache cache = make_cache(model, state);
    record.before = energy_with_cache(model, state, cache, correspondences, config.weights,
                                      config.huber_delta);
    record.after = record.before;

    if (record.before.total < config.energy_floor) {
      record.lambda = lambda;
      state.iteration = it;
      out.iterations.push_back(record);
      out.converged = true;
      if (on_iteration) on_iteration(it, state);
      break;
    }

    std::vector<std::pair<bool, bool>> phases;
    if (config.alternate) {
      phases = {{false, true}, {true, false}};
    } else {
      phases = {{false, false}};
    }
    for (const auto& [freeze_nodes, freeze_pose] : phases) {
      StepResult step = damped_step(model, state, cache, correspondences, config, record.after,
                                    lambda, freeze_nodes, freeze_pose);
      record.retries += step.retries;
      if (!step.accepted) continue;
      record.accepted = true;
      state = std::move(step.state);
      record.after = step.energy;
      cache = make_cache(model, state);
    }
    record.lambda = lambda;
    state.iteration = it;
    out.iterations.push_back(record);
    if (on_iteration) on_iteration(it, state);

    const double decrease = record.before.total - record.after.total;
    if (!record.accepted || record.after.total < config.energy_floor ||
        decrease <= config.relative_tolerance * record.before.total) {
      out.converged = true;
      break;
    }
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return state;
}

void term_jacobian(const TrackingModel& model, const SolveState& state,
                   const CorrespondenceSet& correspondences, int term, Eigen::VectorXd& residuals,
                   Eigen::MatrixXd* jacobian) {
  if (term < 0 || term > 3) throw Error(ErrorKind::kInvalidArgument, "unknown energy term");
  const StateCache cache = make_cache(model, state);
  std::vector<double> r;
  std::vector<Eigen::RowVectorXd> rows;
  const int n = model.parameter_count();
  const int base = 6 * model.node_count();
  for_each_row(model, state, cache, correspondences, term, jacobian != nullptr,
               [&](const JacobianRow& row) {
                 r.push_back(row.residual);
                 if (!jacobian) return;
                 Eigen::RowVectorXd dense = Eigen::RowVectorXd::Zero(n);
                 for (int x = 0; x < row.node_count; ++x) {
                   dense.segment<6>(6 * row.nodes[x]) += row.dnode[x].transpose();
                 }
                 if (row.has_pose) dense.segment(base, n - base) += row.dpose.transpose();
                 rows.push_back(std::move(dense));
               });
  residuals = Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  if (jacobian) {
    jacobian->resize(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t i = 0; i < rows.size(); ++i) jacobian->row(static_cast<Eigen::Index>(i)) = rows[i];
  }
}

JacobianAudit check_jacobian(const TrackingModel& model, const SolveState& state,
                             const CorrespondenceSet& correspondences, double step) {
  const int n = model.parameter_count();
  std::array<double, 4> deviation{};
  for (int term = 0; term < 4; ++term) {
    Eigen::VectorXd r0;
    Eigen::MatrixXd analytic;
    term_jacobian(model, state, correspondences, term, r0, &analytic);
    if (r0.size() == 0) continue;
    Eigen::MatrixXd numeric(r0.size(), n);
    for (int c = 0; c < n; ++c) {
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
      delta[c] = step;
      Eigen::VectorXd plus, minus;
      term_jacobian(model, apply_increment(model, state, delta), correspondences, term, plus, nullptr);
      delta[c] = -step;
      term_jacobian(model, apply_increment(model, state, delta), correspondences, term, minus, nullptr);
      if (plus.size() != r0.size() || minus.size() != r0.size()) {
        throw Error(ErrorKind::kInvalidArgument, "residual count changed under perturbation");
      }
      numeric.col(c) = (plus - minus) / (2.0 * step);
    }
    const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
    deviation[term] = (analytic - numeric).cwiseAbs().maxCoeff() / scale;
  }
  return {deviation[kData], deviation[kArap], deviation[kSkeleton], deviation[kReg]};
}

}  // namespace puppetrack
