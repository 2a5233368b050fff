#include <limits>
#include <memory>

#include <doctest.h>

#include "puppetrack/error.hpp"
#include "scene.hpp"

using namespace puppetrack;
using testing::Random;
using testing::Scene;
using testing::exact_pairs;
using testing::jittered_pairs;
using testing::random_pose;
using testing::skeleton_consistent;

TEST_CASE("energy weights validation") {
  CHECK_NOTHROW(EnergyWeights{}.validate());
  CHECK_THROWS_AS((EnergyWeights{-1.0, 1.0, 1.0, 1.0}.validate()), Error);
  try {
    EnergyWeights{0.0, 0.0, 0.0, 0.0}.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidArgument);
  }
}

TEST_CASE("identity state on a self-associated cloud has zero energy") {
  const testing::PlacedBody body = testing::placed_body();
  const Intrinsics k = default_intrinsics();
  const TargetCloud cloud = backproject(render_depth(body.puppet.mesh, k), k);
  std::vector<Point3> v;
  std::vector<Vec3> n;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid[i]) continue;
    v.push_back(cloud.points[i]);
    n.push_back(cloud.normals[i]);
  }
  const KdTree index(body.puppet.mesh.vertices);
  DeformationGraph graph = build_graph(v);
  graph.assign_skin_weights(body.puppet, index);
  const TrackingSurface surface = make_tracking_surface(v, n, graph, body.puppet, index);
  const TrackingModel model{&graph, &body.topology, &surface};
  const SolveState state{std::vector<RigidTransform>(graph.node_count()), Pose::zero(body.topology), 0};
  const CorrespondenceSet c = projective_associate(v, n, cloud, k);
  CHECK(c.size() == v.size());
  const EnergyTerms e = evaluate_energy(model, state, c, EnergyWeights{});
  CHECK(e.data < 1e-24);
  CHECK(e.arap == 0.0);
  CHECK(e.skeleton < 1e-24);
  CHECK(e.reg < 1e-24);
  CHECK(e.total < 1e-24);
}

TEST_CASE("single 3 mm point-to-plane residual") {
  const SkeletonTopology t({{"a", -1, {0, 0, 0}}, {"b", 0, {0, 0.5, 0}}}, {{"only", 0, 1, 0}});
  PuppetMesh p;
  p.mesh.vertices = {{0, 0.25, 2}};
  p.mesh.normals = {{0, 0, -1}};
  p.weights = {{{0, 1.0}}};
  p.update_labels();
  const KdTree index(p.mesh.vertices);
  DeformationGraph graph = build_graph(p.mesh.vertices);
  graph.assign_skin_weights(p, index);
  const TrackingSurface surface = make_tracking_surface(p.mesh.vertices, p.mesh.normals, graph, p, index);
  const TrackingModel model{&graph, &t, &surface};
  const SolveState state{{RigidTransform::identity()}, Pose::zero(t), 0};
  const Vec3 n(0, 0, -1);
  const CorrespondenceSet c = {{0, p.mesh.vertices[0] - 0.003 * n, n, 1.0}};
  const EnergyTerms e = evaluate_energy(model, state, c, {1.0, 0.0, 0.0, 0.0});
  CHECK(e.total == doctest::Approx(9e-6).epsilon(1e-9));
  CHECK(e.data == doctest::Approx(9e-6).epsilon(1e-9));
  CHECK(e.skeleton == 0.0);
}

TEST_CASE("a global rigid motion has no ARAP or regularization energy") {
  const auto s = std::make_unique<Scene>(0.08, 20);
  const TrackingModel model = s->model();
  Random rng(81);
  const CorrespondenceSet none;
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform t = rng.rigid();
    SolveState state = s->identity();
    state.node_transforms.assign(s->graph.node_count(), t);
    state.pose.root = t;
    const EnergyTerms e = evaluate_energy(model, state, none, EnergyWeights{});
    CHECK(e.arap < 1e-12);
    CHECK(e.reg < 1e-12);
  }
}

TEST_CASE("nodes following the skeleton have no regularization energy") {
  const auto s = std::make_unique<Scene>(0.08, 20);
  const TrackingModel model = s->model();
  Random rng(82);
  const CorrespondenceSet none;
  for (int trial = 0; trial < 50; ++trial) {
    SolveState state = s->identity();
    state.pose = random_pose(s->body.topology, rng, 0.6);
    state.node_transforms = skeleton_consistent(*s, state.pose);
    const EnergyTerms e = evaluate_energy(model, state, none, {0.0, 0.0, 0.0, 1.0});
    CHECK(e.reg < 1e-20);
  }
}

TEST_CASE("energy terms are non-negative") {
  const auto s = std::make_unique<Scene>(0.1, 30);
  const TrackingModel model = s->model();
  Random rng(83);
  for (int trial = 0; trial < 50; ++trial) {
    SolveState state = s->identity();
    for (auto& t : state.node_transforms) t = rng.rigid(0.3);
    state.pose = random_pose(s->body.topology, rng, 1.0);
    const EnergyTerms e = evaluate_energy(model, state, jittered_pairs(s->surface, rng), EnergyWeights{}, 0.01);
    CHECK(e.data >= 0.0);
    CHECK(e.arap >= 0.0);
    CHECK(e.skeleton >= 0.0);
    CHECK(e.reg >= 0.0);
    CHECK(e.total >= 0.0);
  }
}

TEST_CASE("zero-weight terms read zero") {
  const auto s = std::make_unique<Scene>(0.1, 30);
  Random rng(84);
  SolveState state = s->identity();
  for (auto& t : state.node_transforms) t = rng.rigid(0.1);
  const EnergyTerms e = evaluate_energy(s->model(), state, jittered_pairs(s->surface, rng), {1.0, 0.0, 0.0, 0.0});
  CHECK(e.data > 0.0);
  CHECK(e.arap == 0.0);
  CHECK(e.skeleton == 0.0);
  CHECK(e.reg == 0.0);
  CHECK(e.total == e.data);
}

TEST_CASE("analytic Jacobians match finite differences") {
  const auto s = std::make_unique<Scene>(0.2, 40);
  MESSAGE("nodes ", s->graph.node_count());
  REQUIRE(s->graph.node_count() <= 50);
  REQUIRE(s->graph.node_count() >= 10);
  Random rng(85);
  for (int trial = 0; trial < 3; ++trial) {
    SolveState state = s->identity();
    state.pose = random_pose(s->body.topology, rng, 0.4);
    for (auto& t : state.node_transforms) t = {exp_so3(rng.unit() * rng.uniform(0.0, 0.5)), rng.vec(-0.05, 0.05)};
    const JacobianAudit audit = check_jacobian(s->model(), state, jittered_pairs(s->surface, rng));
    CHECK(audit.data < 1e-4);
    CHECK(audit.arap < 1e-4);
    CHECK(audit.skeleton < 1e-4);
    CHECK(audit.reg < 1e-4);
  }
}

TEST_CASE("apply_increment layout") {
  const auto s = std::make_unique<Scene>(0.2, 40);
  const TrackingModel model = s->model();
  Random rng(86);
  SolveState state = s->identity();
  for (auto& t : state.node_transforms) t = rng.rigid(0.2);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(model.parameter_count());
  delta.segment<3>(0) = Vec3(0.1, 0, 0);
  delta.segment<3>(9) = Vec3(0, 0, 0.2);
  const SolveState next = apply_increment(model, state, delta);
  const auto warped = [&](const SolveState& st, int i) { return st.node_transforms[i].apply(s->graph.positions()[i]); };
  CHECK((warped(next, 0) - warped(state, 0) - Vec3(0.1, 0, 0)).norm() < 1e-12);
  CHECK(testing::max_abs(next.node_transforms[0].rotation - state.node_transforms[0].rotation) == 0.0);
  CHECK((warped(next, 1) - warped(state, 1)).norm() < 1e-12);
  CHECK(testing::max_abs(next.node_transforms[1].rotation - exp_so3({0, 0, 0.2}) * state.node_transforms[1].rotation) < 1e-15);
  for (int i = 2; i < model.node_count(); ++i) {
    CHECK(testing::max_abs(next.node_transforms[i].rotation - state.node_transforms[i].rotation) == 0.0);
    CHECK((next.node_transforms[i].translation - state.node_transforms[i].translation).norm() < 1e-12);
  }
  CHECK_THROWS_AS(apply_increment(model, state, Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("solving from the true state converges at once") {
  const auto s = std::make_unique<Scene>(0.08, 10);
  const TrackingModel model = s->model();
  Random rng(87);
  const RigidTransform t = {exp_so3({0.05, -0.1, 0.08}), Vec3(0.03, -0.02, 0.05)};
  SolveState truth = s->identity();
  truth.node_transforms.assign(s->graph.node_count(), t);
  truth.pose.root = t;
  const CorrespondenceSet pairs = exact_pairs(model, truth);
  CHECK(evaluate_energy(model, truth, pairs, EnergyWeights{}).total < 1e-10);

  const Intrinsics k = default_intrinsics();
  const TargetCloud cloud = backproject(render_depth(s->body.puppet.mesh, k), k);
  const FrameData frame{&cloud, &k, &pairs};
  SolveReport report;
  const SolveState out = solve_gauss_newton(model, truth, frame, SolverConfig{}, &report);
  CHECK(report.converged);
  REQUIRE(report.iterations.size() == 1);
  CHECK(report.iterations[0].before.total < 1e-10);
  for (int i = 0; i < model.node_count(); ++i) {
    CHECK(testing::max_abs(out.node_transforms[i].rotation - t.rotation) == 0.0);
    CHECK((out.node_transforms[i].translation - t.translation).norm() == 0.0);
  }
}

TEST_CASE("a rigid motion is recovered with puppet initialization") {
  const auto s = std::make_unique<Scene>(0.05, 1, true);
  const TrackingModel model = s->model();
  const int nb = s->body.topology.bone_count();
  const Intrinsics k = default_intrinsics();
  const Point3 pivot = s->body.joints.positions[0];
  const RigidTransform motion = compose(RigidTransform::translate(pivot + Vec3(0.03, 0.01, -0.02)),
                                        compose({exp_so3({0, testing::deg(8), testing::deg(3)}), Vec3::Zero()},
                                                RigidTransform::translate(-pivot)));
  TriangleMesh moved = s->body.puppet.mesh;
  for (auto& v : moved.vertices) v = motion.apply(v);
  for (auto& n : moved.normals) n = motion.apply_normal(n);
  JointObservation joints = s->body.joints;
  for (auto& j : joints.positions) j = motion.apply(j);
  const TargetCloud cloud = backproject(render_depth(moved, k), k);

  const AlignedPuppet aligned = align_to_frame(s->body.topology, s->body.puppet, AlignedPuppet::rest(s->body.puppet, nb),
                                               s->body.joints, joints, cloud, k);
  const DeformationGraph initialized = initialize_from_puppet(s->graph, PuppetWarpField::from_rest(s->body.puppet, aligned));
  SolveState state = s->identity();
  state.node_transforms = initialized.transforms();
  state.pose = pose_from_bone_transforms(s->body.topology, aligned.bone_transforms);
  const CorrespondenceSet mediated =
      puppet_mediated_correspondences(s->surface.vertices, s->body.puppet, s->index, aligned, cloud, k);
  const FrameData frame{&cloud, &k, &mediated};
  SolveReport report;
  const SolveState out = solve_gauss_newton(model, state, frame, SolverConfig{}, &report);

  const WarpedSurface w = warp_surface(model, out);
  double sq = 0.0;
  for (std::size_t i = 0; i < w.graph_points.size(); ++i) {
    sq += (w.graph_points[i] - motion.apply(s->surface.vertices[i])).squaredNorm();
  }
  const double rms = std::sqrt(sq / w.graph_points.size());
  MESSAGE("vertex RMS ", rms * 1000.0, " mm");
  CHECK(rms < 1e-3);
  CHECK(report.iterations.size() <= 4);
  for (const auto& it : report.iterations) {
    if (it.accepted) CHECK(it.after.total <= it.before.total);
    CHECK(it.retries <= 10);
  }
}

TEST_CASE("solver errors") {
  const auto s = std::make_unique<Scene>(0.2, 40);
  const TrackingModel model = s->model();
  const Intrinsics k = default_intrinsics();
  SUBCASE("no correspondences") {
    const TargetCloud empty = backproject(DepthImage(k.width, k.height), k);
    const FrameData frame{&empty, &k, nullptr};
    try {
      solve_gauss_newton(model, s->identity(), frame, SolverConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNoCorrespondences);
    }
  }
  SUBCASE("non-finite system") {
    SolveState state = s->identity();
    state.node_transforms[0].translation.x() = std::numeric_limits<double>::quiet_NaN();
    Random rng(88);
    const CorrespondenceSet pairs = jittered_pairs(s->surface, rng);
    const TargetCloud cloud = backproject(render_depth(s->body.puppet.mesh, k), k);
    const FrameData frame{&cloud, &k, &pairs};
    try {
      solve_gauss_newton(model, state, frame, SolverConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kSingularSystem);
    }
  }
  SUBCASE("state size mismatch") {
    SolveState state = s->identity();
    state.node_transforms.pop_back();
    const TargetCloud cloud = backproject(render_depth(s->body.puppet.mesh, k), k);
    const FrameData frame{&cloud, &k, nullptr};
    CHECK_THROWS_AS(solve_gauss_newton(model, state, frame, SolverConfig{}), Error);
  }
}
