// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [scratch-dir] [--only C5,C7]

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "puppetrack/error.hpp"
#include "puppetrack/eval.hpp"
#include "puppetrack/fusion.hpp"
#include "puppetrack/pipeline.hpp"
#include "scene.hpp"

using namespace puppetrack;
namespace fs = std::filesystem;

namespace {

// C1
constexpr int kRotationPairs = 100000;
constexpr double kRotationTol = 1e-9;
constexpr double kRotationSeconds = 5.0;
// C2
constexpr int kBoneMotions = 10000;
constexpr double kBoneTol = 1e-9;
// C3
constexpr int kAuditNodes = 30;
constexpr double kJacobianTol = 1e-4;
constexpr double kAuditSeconds = 60.0;
// C4
constexpr int kRigidTrials = 100;
constexpr double kArapTol = 1e-12;
constexpr double kRegTol = 1e-12;
constexpr double kTruthEnergyTol = 1e-10;
// C5
constexpr double kAblationAngleDeg = 45.0;
constexpr int kAblationIterations = 4;
constexpr double kMonotoneSlackMm = 0.01;
constexpr double kMinImprovement = 0.10;
constexpr double kAblationSeconds = 300.0;
// C6
constexpr double kMediatedAngleDeg = 60.0;
constexpr double kMediatedShare = 0.90;
// C7
constexpr int kSphereFrames = 30;
constexpr double kSphereRadius = 0.4;
constexpr double kSphereVoxel = 0.005;
constexpr double kSphereSeconds = 120.0;
// C8
constexpr int kTrackFrames = 60;
constexpr double kPeakMotion = 0.3;
constexpr double kDiagonalShare = 0.02;
constexpr double kDivergenceFactor = 3.0;
constexpr double kTrackSeconds = 1800.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome rotation_formula() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::Random rng(1001);
  double worst = 0.0;
  for (int i = 0; i < kRotationPairs; ++i) {
    const Vec3 a = rng.unit().normalized(), b = rng.unit().normalized();
    const Mat3 r = rotation_between(a, b);
    worst = std::max({worst, (r * a - b).norm(), testing::max_abs(r.transpose() * r - Mat3::Identity()),
                      std::abs(r.determinant() - 1.0)});
  }
  const double elapsed = seconds_since(t0);

  bool fallback = true;
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = rng.unit().normalized();
    try {
      rotation_between(a, -a);
      fallback = false;
    } catch (const Error& e) {
      fallback = fallback && e.kind() == ErrorKind::kAntiparallelAxes;
    }
    const Mat3 r = rotation_between_or_flip(a, -a);
    fallback = fallback && (r * a + a).norm() < kRotationTol &&
               testing::max_abs(r.transpose() * r - Mat3::Identity()) < kRotationTol &&
               std::abs(r.determinant() - 1.0) < kRotationTol;
  }
  return {worst < kRotationTol && fallback && elapsed < kRotationSeconds,
          format("%d pairs, max deviation %.2e, antiparallel fallback %s, %.2f s", kRotationPairs, worst,
                 fallback ? "ok" : "broken", elapsed)};
}

Outcome bone_transform_exactness() {
  testing::Random rng(1002);
  const SkeletonTopology t = default_topology();
  double worst = 0.0;
  for (int i = 0; i < kBoneMotions; ++i) {
    const Bone& bone = t.bone(static_cast<int>(rng.uniform(0.0, t.bone_count() - 1e-9)));
    const Point3 head = t.rest_positions()[bone.head] + rng.vec(-0.2, 0.2);
    const Point3 tail = t.rest_positions()[bone.tail] + rng.vec(-0.2, 0.2);
    const RigidTransform m = rng.rigid();
    const RigidTransform r = bone_rigid_transform(head, tail, m.apply(head), m.apply(tail));
    const Point3 mid = 0.5 * (head + tail);
    worst = std::max({worst, (r.apply(head) - m.apply(head)).norm(), (r.apply(tail) - m.apply(tail)).norm(),
                      (r.apply(mid) - m.apply(mid)).norm()});
  }
  return {worst < kBoneTol, format("%d motions, max deviation %.2e m", kBoneMotions, worst)};
}

Outcome jacobian_audit() {
  const auto t0 = std::chrono::steady_clock::now();
  const testing::PlacedBody body = testing::placed_body();
  double spacing = 0.2;
  while (build_graph(body.puppet.mesh.vertices, {.node_spacing = spacing}).node_count() < kAuditNodes) spacing -= 0.002;
  const auto s = std::make_unique<testing::Scene>(spacing, 40);
  testing::Random rng(1003);
  SolveState state = s->identity();
  state.pose = testing::random_pose(s->body.topology, rng, 0.4);
  for (auto& x : state.node_transforms) x = {exp_so3(rng.unit() * rng.uniform(0.0, 0.5)), rng.vec(-0.05, 0.05)};
  const JacobianAudit a = check_jacobian(s->model(), state, testing::jittered_pairs(s->surface, rng));
  const double worst = std::max({a.data, a.arap, a.skeleton, a.reg});
  const double elapsed = seconds_since(t0);
  return {worst < kJacobianTol && elapsed < kAuditSeconds,
          format("%d nodes, data %.1e arap %.1e skeleton %.1e reg %.1e, %.1f s", s->graph.node_count(), a.data,
                 a.arap, a.skeleton, a.reg, elapsed)};
}

Outcome energy_invariants() {
  const auto s = std::make_unique<testing::Scene>(0.08, 10);
  const TrackingModel model = s->model();
  testing::Random rng(1004);
  const CorrespondenceSet none;
  double arap = 0.0, rigid_reg = 0.0;
  for (int i = 0; i < kRigidTrials; ++i) {
    const RigidTransform t = rng.rigid();
    SolveState state = s->identity();
    state.node_transforms.assign(s->graph.node_count(), t);
    state.pose.root = t;
    const EnergyTerms e = evaluate_energy(model, state, none, EnergyWeights{});
    arap = std::max(arap, e.arap);
    rigid_reg = std::max(rigid_reg, e.reg);
  }
  double lbs_reg = 0.0;
  for (int i = 0; i < kRigidTrials; ++i) {
    SolveState state = s->identity();
    state.pose = testing::random_pose(s->body.topology, rng, 0.6);
    state.node_transforms = testing::skeleton_consistent(*s, state.pose);
    lbs_reg = std::max(lbs_reg, evaluate_energy(model, state, none, {0.0, 0.0, 0.0, 1.0}).reg);
  }
  SolveState truth = s->identity();
  const RigidTransform t = {exp_so3({0.05, -0.1, 0.08}), Vec3(0.03, -0.02, 0.05)};
  truth.node_transforms.assign(s->graph.node_count(), t);
  truth.pose.root = t;
  const double total = evaluate_energy(model, truth, testing::exact_pairs(model, truth), EnergyWeights{}).total;
  return {arap < kArapTol && rigid_reg < kRegTol && lbs_reg < kRegTol && total < kTruthEnergyTol,
          format("rigid E_arap %.1e E_reg %.1e, skeleton-driven E_reg %.1e, truth E %.1e", arap, rigid_reg,
                 lbs_reg, total)};
}

void emit_arm_pair(const fs::path& dir, double degrees) {
  const SkeletonTopology t = default_topology();
  const PuppetMesh puppet = generate_procedural_puppet(t, default_proportions(t));
  MotionScript s("arm_pair", 2, t.joint_count());
  const double a = testing::deg(degrees);
  for (const auto& [name, sign] : {std::pair{"l_shoulder", 1.0}, std::pair{"r_shoulder", -1.0}}) {
    s.add_joint_key(t.find_joint(name), 0, Vec3::Zero());
    s.add_joint_key(t.find_joint(name), 1, Vec3(0, 0, sign * a));
  }
  emit_sequence(puppet, t, s, default_intrinsics(), dir, {.color = false});
}

Outcome ablation_ordering(const fs::path& scratch) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = scratch / "ablation_pair";
  emit_arm_pair(dir, kAblationAngleDeg);
  PipelineConfig config;
  config.sequence_dir = dir;
  config.solver.max_iterations = kAblationIterations;
  const auto rows = run_ablation(config);
  std::vector<double> case1, case2;
  for (const auto& r : rows) (r.name.starts_with("case1") ? case1 : case2).push_back(r.metrics.mae_mm);
  bool monotone = case1.size() == kAblationIterations && case2.size() == kAblationIterations;
  bool ordered = monotone;
  for (std::size_t i = 0; monotone && i < case1.size(); ++i) {
    if (i > 0) monotone = case1[i] <= case1[i - 1] + kMonotoneSlackMm && case2[i] <= case2[i - 1] + kMonotoneSlackMm;
    ordered = ordered && case2[i] <= case1[i];
  }
  const double improvement = case1.empty() ? 0.0 : (case1.back() - case2.back()) / case1.back();
  const double elapsed = seconds_since(t0);
  std::string curve;
  for (std::size_t i = 0; i < case1.size() && i < case2.size(); ++i) curve += format(" %.2f/%.2f", case1[i], case2[i]);
  return {monotone && ordered && improvement >= kMinImprovement && elapsed < kAblationSeconds,
          format("MAE mm no-init/init per iteration:%s, final improvement %.0f%%, %.0f s", curve.c_str(),
                 100.0 * improvement, elapsed)};
}

Outcome mediated_superiority() {
  const testing::PlacedBody body = testing::placed_body();
  const Intrinsics k = default_intrinsics();
  const testing::PosedBody moved =
      testing::pose_body(body, testing::arms_rotated(body.topology, testing::deg(kMediatedAngleDeg)));
  const TargetCloud c = backproject(render_depth(moved.mesh, k), k);
  const AlignedPuppet aligned = align_to_frame(body.topology, body.puppet,
                                               AlignedPuppet::rest(body.puppet, body.topology.bone_count()),
                                               body.joints, moved.joints, c, k);
  const KdTree index(body.puppet.mesh.vertices);
  const auto& v = body.puppet.mesh.vertices;
  const CorrespondenceSet mediated = puppet_mediated_correspondences(v, body.puppet, index, aligned, c, k);
  const CorrespondenceSet direct = projective_associate(v, body.puppet.mesh.normals, c, k);
  std::vector<double> mediated_error(v.size(), 1e300), direct_error(v.size(), 1e300);
  for (const auto& p : mediated) mediated_error[p.source] = (p.target - moved.mesh.vertices[p.source]).norm();
  for (const auto& p : direct) direct_error[p.source] = (p.target - moved.mesh.vertices[p.source]).norm();

  std::vector<bool> limb(body.topology.bone_count(), false);
  for (const char* name : {"l_upper_arm", "l_forearm", "r_upper_arm", "r_forearm"}) limb[body.topology.find_bone(name)] = true;
  int counted = 0, better = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!limb[body.puppet.part[i]] || body.puppet.joint_region[i]) continue;
    int pu = 0, pv = 0;
    if (!k.project(moved.mesh.vertices[i], pu, pv) || !c.is_valid(pu, pv)) continue;
    if (std::abs(c.point(pu, pv).z() - moved.mesh.vertices[i].z()) > 0.005) continue;
    ++counted;
    better += mediated_error[i] < direct_error[i];
  }
  const double share = counted ? static_cast<double>(better) / counted : 0.0;
  return {counted > 0 && share >= kMediatedShare,
          format("%d of %d visible limb vertices closer (%.1f%%)", better, counted, 100.0 * share)};
}

Outcome tsdf_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const Intrinsics k = default_intrinsics();
  const Point3 center(0, 0, 2.5);
  const TriangleMesh sphere = testing::uv_sphere(kSphereRadius, center, 128, 256);
  const DepthImage depth = render_depth(sphere, k);
  VolumeConfig config;
  config.voxel_size = kSphereVoxel;
  TsdfVolume vol = TsdfVolume::enclosing(bounding_box(sphere.vertices), config);
  for (int f = 0; f < kSphereFrames; ++f) integrate_frame(vol, depth, k);
  const TriangleMesh m = extract_mesh(vol);
  double sq = 0.0;
  for (const auto& v : m.vertices) sq += std::pow((v - center).norm() - kSphereRadius, 2);
  const double rms = std::sqrt(sq / m.vertices.size());
  const double elapsed = seconds_since(t0);
  return {rms < kSphereVoxel && elapsed < kSphereSeconds,
          format("%d frames, %zu vertices, radial RMS %.2f mm, %.1f s", kSphereFrames, m.vertices.size(),
                 rms * 1000.0, elapsed)};
}

struct TrackingRun {
  std::vector<double> mae_mm;
  bool failed = false;
};

TrackingRun track_sequence(const fs::path& seq, const fs::path& out, bool puppet_init, bool skeleton_term) {
  PipelineConfig config;
  config.sequence_dir = seq;
  config.output_dir = out;
  config.puppet_init = puppet_init;
  config.skeleton_term = skeleton_term;
  TrackingRun run;
  const ReconstructionResult r = run_reconstruct(config);
  run.failed = r.failed;
  for (int f = 0; f < r.frames_processed; ++f) {
    run.mae_mm.push_back(mae_point_to_plane(read_obj(frame_file(out, f, "recon.obj")),
                                            read_obj(frame_file(seq, f, "gt.obj")))
                             .mean_mm);
  }
  return run;
}

struct TrackingContext {
  fs::path sequence;
  double bound_mm = 0.0;
  double peak_motion = 0.0;
};

TrackingContext generate_tracking_sequence(const fs::path& scratch) {
  TrackingContext ctx;
  ctx.sequence = scratch / "arm_swing";
  fs::remove_all(ctx.sequence);
  const SkeletonTopology t = default_topology();
  const PuppetMesh puppet = generate_procedural_puppet(t, default_proportions(t));
  const SequenceManifest m = emit_sequence(puppet, t, builtin_script("arm_swing", t, kTrackFrames),
                                           default_intrinsics(), ctx.sequence, {.color = false});
  ctx.peak_motion = m.motion.max;
  const Aabb box = bounding_box(read_obj(frame_file(ctx.sequence, 0, "gt.obj")).vertices);
  ctx.bound_mm = kDiagonalShare * (box.hi - box.lo).norm() * 1000.0;
  return ctx;
}

Outcome end_to_end(const fs::path& scratch, const TrackingContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrackingRun full = track_sequence(ctx.sequence, scratch / "full", true, true);
  const TrackingRun ablated = track_sequence(ctx.sequence, scratch / "no_init_no_skeleton", false, false);
  const double elapsed = seconds_since(t0);
  const double full_max = full.mae_mm.empty() ? 1e300 : *std::max_element(full.mae_mm.begin(), full.mae_mm.end());
  const double ablated_max =
      ablated.mae_mm.empty() ? 0.0 : *std::max_element(ablated.mae_mm.begin(), ablated.mae_mm.end());
  const bool tracked = !full.failed && static_cast<int>(full.mae_mm.size()) == kTrackFrames && full_max < ctx.bound_mm;
  const bool diverged = ablated.failed || ablated_max > kDivergenceFactor * ctx.bound_mm;
  return {ctx.peak_motion >= kPeakMotion && tracked && diverged && elapsed < kTrackSeconds,
          format("peak motion %.3f m, bound %.1f mm, full max MAE %.2f mm, no-init/no-skeleton max MAE %.2f mm "
                 "(needs > %.1f), %.0f s",
                 ctx.peak_motion, ctx.bound_mm, full_max, ablated_max, kDivergenceFactor * ctx.bound_mm, elapsed)};
}

Outcome metric_self_tests() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  const TriangleMesh s = testing::uv_sphere(0.5, {0, 0, 2}, 24, 48);
  const MaeResult self = mae_point_to_plane(s, s);
  expect(self.mean_mm == 0.0 && self.std_mm == 0.0, "MAE(A,A)");
  expect(hausdorff(s, s) == 0.0, "Hausdorff(A,A)");
  expect(outlier_count(s, s) == 0, "outliers(A,A)");

  const TriangleMesh plane = testing::grid_plane(20, 0.5, 2.0);
  const MaeResult offset = mae_point_to_plane(testing::translated(plane, {0, 0, 0.003}), plane);
  expect(std::abs(offset.mean_mm - 3.0) < 1e-9 && offset.std_mm < 1e-9, "3 mm plane offset");

  const double sphere_mae = mae_point_to_plane(testing::uv_sphere(1.002, {0, 0, 0}, 96, 192),
                                               testing::uv_sphere(1.0, {0, 0, 0}, 96, 192))
                                .mean_mm;
  expect(std::abs(sphere_mae - 2.0) <= 0.1, "radius 1.002 sphere");

  const double apart = hausdorff(testing::uv_sphere(1.0, {0, 0, 0}, 128, 256),
                                 testing::uv_sphere(1.0, {0.01, 0, 0}, 128, 256));
  expect(std::abs(apart - 0.01) < 2e-4, "spheres 10 mm apart");
  const double dilated = hausdorff(testing::uv_sphere(0.3, {0, 0, 2}, 96, 192), testing::uv_sphere(0.305, {0, 0, 2}, 96, 192));
  expect(std::abs(dilated - 0.005) < 2e-4, "5 mm dilation");

  const TriangleMesh shifted = testing::translated(plane, {0, 0, 0.010});
  expect(outlier_count(shifted, plane) == static_cast<int>(shifted.vertices.size()), "10 mm offset outliers");
  expect(kDefaultOutlierThreshold == 0.005, "default threshold 5 mm");

  std::string detail = format("sphere MAE %.4f mm, 10 mm apart %.3f mm, dilation %.3f mm", sphere_mae,
                              apart * 1000.0, dilated * 1000.0);
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Compares every file of two directories byte for byte.
bool same_tree(const fs::path& a, const fs::path& b, int& files) {
  std::set<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a)) names_a.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) names_b.insert(e.path().filename().string());
  if (names_a != names_b) return false;
  for (const auto& n : names_a) {
    if (slurp(a / n) != slurp(b / n)) return false;
  }
  files = static_cast<int>(names_a.size());
  return true;
}

Outcome determinism(const fs::path& scratch, const TrackingContext& ctx) {
  // Both runs write to the same path so config.json matches too.
  const fs::path run = scratch / "determinism";
  auto reconstruct = [&] {
    fs::remove_all(run);
    PipelineConfig config;
    config.sequence_dir = ctx.sequence;
    config.output_dir = run;
    run_reconstruct(config);
    write_metrics_csv(run / "metrics.csv", run_evaluate(run, ctx.sequence));
  };
  reconstruct();
  const fs::path first = scratch / "determinism_first";
  fs::remove_all(first);
  fs::rename(run, first);
  reconstruct();
  int files = 0;
  const bool same = same_tree(first, run, files);
  return {same && files > kTrackFrames, format("%d files compared, %s", files, same ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path scratch = fs::temp_directory_path() / "puppetrack_acceptance";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string id; std::getline(list, id, ',');) only.insert(id);
    } else {
      scratch = arg;
    }
  }
  fs::create_directories(scratch);

  std::optional<TrackingContext> tracking;
  auto tracking_context = [&]() -> const TrackingContext& {
    if (!tracking) tracking = generate_tracking_sequence(scratch);
    return *tracking;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1", rotation_formula},
      {"C2", bone_transform_exactness},
      {"C3", jacobian_audit},
      {"C4", energy_invariants},
      {"C5", [&] { return ablation_ordering(scratch); }},
      {"C6", mediated_superiority},
      {"C7", tsdf_soundness},
      {"C8", [&] { return end_to_end(scratch, tracking_context()); }},
      {"C9", metric_self_tests},
      {"C10", [&] { return determinism(scratch, tracking_context()); }},
  };

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
