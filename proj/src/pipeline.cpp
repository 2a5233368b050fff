#include "puppetrack/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "puppetrack/error.hpp"
#include "puppetrack/synth.hpp"

namespace puppetrack {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed: " + path.string());
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Per-bone rigid fit of the template skeleton onto observed joints. Bones
// with unobserved ends take their parent bone's transform.
std::vector<RigidTransform> fit_bones(const SkeletonTopology& topology, const JointObservation& joints) {
  const auto& rest = topology.rest_positions();
  std::vector<int> order(topology.bone_count());
  for (int b = 0; b < topology.bone_count(); ++b) order[b] = b;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return topology.bone(a).head < topology.bone(b).head;
  });
  std::vector<RigidTransform> out(topology.bone_count());
  for (int b : order) {
    const Bone& bone = topology.bone(b);
    if (joints.is_valid(bone.head) && joints.is_valid(bone.tail)) {
      try {
        out[b] = bone_rigid_transform(rest[bone.head], rest[bone.tail], joints.positions[bone.head],
                                      joints.positions[bone.tail]);
        continue;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDegenerateBone) throw;
      }
    }
    const int parent = topology.parent_bone(b);
    out[b] = parent >= 0 ? out[parent] : RigidTransform{};
  }
  return out;
}

int count_frames(const fs::path& dir, const std::string& suffix) {
  int n = 0;
  while (fs::exists(frame_file(dir, n, suffix))) ++n;
  return n;
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidArgument, what); };
  if (solver.max_iterations < 1) fail("iterations must be at least 1");
  solver.weights.validate();
  if (solver.initial_lambda <= 0.0) fail("damping must be positive");
  if (solver.max_retries < 0) fail("retries must be non-negative");
  if (solver.huber_delta < 0.0) fail("huber delta must be non-negative");
  if (solver.thresholds.max_distance <= 0.0 || solver.thresholds.max_normal_angle_deg <= 0.0) {
    fail("association thresholds must be positive");
  }
  if (graph.node_spacing <= 0.0 || graph.arap_neighbors < 1 || graph.warp_neighbors < 1 ||
      graph.warp_neighbors > kMaxWarpNeighbors) {
    fail("invalid graph parameters");
  }
  if (graph_growth <= 0.0) fail("graph growth threshold must be positive");
  if (volume.voxel_size <= 0.0 || volume.truncation_voxels <= 0.0 || volume.max_weight <= 0.0f ||
      volume.margin < 0.0) {
    fail("invalid volume parameters");
  }
  if (align.icp_iterations < 0) fail("ICP iterations must be non-negative");
  if (joint_region_threshold <= 0.0 || joint_region_threshold > 1.0) fail("joint threshold must be in (0, 1]");
}

PipelineConfig config_from_json(const std::string& text) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("bad config: ") + e.what());
  }
  try {
    if (j.contains("sequence")) c.sequence_dir = j.at("sequence").get<std::string>();
    if (j.contains("output")) c.output_dir = j.at("output").get<std::string>();
    if (j.contains("puppet")) {
      const auto& p = j.at("puppet");
      if (p.contains("mesh")) c.puppet_mesh = p.at("mesh").get<std::string>();
      if (p.contains("weights")) c.puppet_weights = p.at("weights").get<std::string>();
    }
    read_into(j, "frames", c.frames);
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      read_into(s, "iterations", c.solver.max_iterations);
      read_into(s, "alpha_data", c.solver.weights.data);
      read_into(s, "alpha_arap", c.solver.weights.arap);
      read_into(s, "alpha_skeleton", c.solver.weights.skeleton);
      read_into(s, "alpha_reg", c.solver.weights.reg);
      read_into(s, "initial_lambda", c.solver.initial_lambda);
      read_into(s, "max_retries", c.solver.max_retries);
      read_into(s, "huber_delta", c.solver.huber_delta);
      read_into(s, "alternate", c.solver.alternate);
    }
    if (j.contains("association")) {
      const auto& a = j.at("association");
      read_into(a, "max_distance", c.solver.thresholds.max_distance);
      read_into(a, "max_normal_angle_deg", c.solver.thresholds.max_normal_angle_deg);
      c.align.thresholds = c.solver.thresholds;
    }
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      read_into(g, "node_spacing", c.graph.node_spacing);
      read_into(g, "arap_neighbors", c.graph.arap_neighbors);
      read_into(g, "warp_neighbors", c.graph.warp_neighbors);
      read_into(g, "growth_threshold", c.graph_growth);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      read_into(f, "voxel_size", c.volume.voxel_size);
      read_into(f, "truncation_voxels", c.volume.truncation_voxels);
      read_into(f, "max_weight", c.volume.max_weight);
      read_into(f, "margin", c.volume.margin);
    }
    if (j.contains("puppet_model")) {
      const auto& p = j.at("puppet_model");
      read_into(p, "joint_region_threshold", c.joint_region_threshold);
      read_into(p, "icp_iterations", c.align.icp_iterations);
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      read_into(a, "puppet_init", c.puppet_init);
      read_into(a, "skeleton_term", c.skeleton_term);
      read_into(a, "mediated_correspondence", c.mediated_correspondence);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  const json j = {
      {"sequence", c.sequence_dir.string()},
      {"output", c.output_dir.string()},
      {"puppet", {{"mesh", c.puppet_mesh.string()}, {"weights", c.puppet_weights.string()}}},
      {"frames", c.frames},
      {"solver",
       {{"iterations", c.solver.max_iterations},
        {"alpha_data", c.solver.weights.data},
        {"alpha_arap", c.solver.weights.arap},
        {"alpha_skeleton", c.solver.weights.skeleton},
        {"alpha_reg", c.solver.weights.reg},
        {"initial_lambda", c.solver.initial_lambda},
        {"max_retries", c.solver.max_retries},
        {"huber_delta", c.solver.huber_delta},
        {"alternate", c.solver.alternate}}},
      {"association",
       {{"max_distance", c.solver.thresholds.max_distance},
        {"max_normal_angle_deg", c.solver.thresholds.max_normal_angle_deg}}},
      {"graph",
       {{"node_spacing", c.graph.node_spacing},
        {"arap_neighbors", c.graph.arap_neighbors},
        {"warp_neighbors", c.graph.warp_neighbors},
        {"growth_threshold", c.graph_growth}}},
      {"fusion",
       {{"voxel_size", c.volume.voxel_size},
        {"truncation_voxels", c.volume.truncation_voxels},
        {"max_weight", c.volume.max_weight},
        {"margin", c.volume.margin}}},
      {"puppet_model",
       {{"joint_region_threshold", c.joint_region_threshold},
        {"icp_iterations", c.align.icp_iterations}}},
      {"ablation",
       {{"puppet_init", c.puppet_init},
        {"skeleton_term", c.skeleton_term},
        {"mediated_correspondence", c.mediated_correspondence}}},
  };
  return j.dump(2) + "\n";
}

std::string diagnostics_csv(const std::vector<DiagnosticsRow>& rows) {
  std::string out = "frame,iteration,E_data,E_arap,E_skeleton,E_reg,total,n_corr\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9e,%.9e,%.9e,%.9e,%.9e,%d\n", r.frame, r.iteration,
                  r.energy.data, r.energy.arap, r.energy.skeleton, r.energy.reg, r.energy.total,
                  r.correspondences);
    out += buf;
  }
  return out;
}

Reconstructor::Reconstructor(PipelineConfig config, SkeletonTopology topology,
                             PuppetMesh template_puppet, Intrinsics intrinsics)
    : config_(std::move(config)), template_topology_(std::move(topology)),
      template_puppet_(std::move(template_puppet)), intrinsics_(intrinsics) {
  config_.validate();
  intrinsics_.validate();
  if (template_puppet_.vertex_count() == 0) throw Error(ErrorKind::kEmptyMesh, "puppet has no vertices");
}

void Reconstructor::bootstrap(const DepthImage& depth, const JointObservation& joints) {
  const std::vector<RigidTransform> fit = fit_bones(template_topology_, joints);

  std::vector<Point3> canonical_joints(template_topology_.joint_count());
  const auto& rest = template_topology_.rest_positions();
  canonical_joints[0] = joints.is_valid(0) ? joints.positions[0] : fit.empty() ? rest[0] : fit[0].apply(rest[0]);
  for (int b = 0; b < template_topology_.bone_count(); ++b) {
    const int tail = template_topology_.bone(b).tail;
    canonical_joints[tail] = joints.is_valid(tail) ? joints.positions[tail] : fit[b].apply(rest[tail]);
  }
  canonical_topology_ = template_topology_.with_rest_positions(canonical_joints);

  const SkinnedSurface fitted = skin(template_puppet_, fit);
  rest_puppet_ = template_puppet_;
  rest_puppet_.mesh.vertices = fitted.vertices;
  rest_puppet_.mesh.normals = fitted.normals;
  rest_puppet_.update_labels(config_.joint_region_threshold);
  rest_index_ = KdTree(rest_puppet_.mesh.vertices);

  volume_ = TsdfVolume::enclosing(bounding_box(rest_puppet_.mesh.vertices), config_.volume);
  integrate_frame(volume_, depth, intrinsics_);
  canonical_ = extract_mesh(volume_);
  graph_area_ = surface_area(canonical_);

  graph_ = DeformationGraph::build(canonical_.vertices, config_.graph);
  graph_.assign_skin_weights(rest_puppet_, rest_index_);
  voxel_cache_ = cache_voxel_influences(volume_, graph_);
  refresh_surface();

  pose_ = Pose::zero(canonical_topology_);
  aligned_ = AlignedPuppet::rest(rest_puppet_, canonical_topology_.bone_count(), 0);
  joints_ = JointObservation::all_valid(canonical_joints);
  frames_seen_ = 1;
}

void Reconstructor::refresh_surface() {
  surface_ = make_tracking_surface(canonical_.vertices, canonical_.normals, graph_, rest_puppet_, rest_index_);
}

TriangleMesh Reconstructor::track(const DepthImage& depth, const JointObservation& joints,
                                  SolveReport* report, const IterationCallback& on_iteration) {
  if (frames_seen_ == 0) throw Error(ErrorKind::kInvalidArgument, "bootstrap must run first");
  const TargetCloud cloud = backproject(depth, intrinsics_);

  AlignConfig align = config_.align;
  const AlignedPuppet aligned = align_to_frame(canonical_topology_, rest_puppet_, aligned_, joints_,
                                               joints, cloud, intrinsics_, align);
  if (config_.puppet_init) {
    const PuppetWarpField field = PuppetWarpField::between(rest_puppet_, aligned_, aligned);
    graph_ = initialize_from_puppet(graph_, field);
    pose_ = pose_from_bone_transforms(canonical_topology_, aligned.bone_transforms);
  }

  CorrespondenceSet mediated;
  FrameData frame{&cloud, &intrinsics_, nullptr};
  if (config_.mediated_correspondence) {
    try {
      mediated = puppet_mediated_correspondences(canonical_.vertices, rest_puppet_, rest_index_, aligned,
                                                 cloud, intrinsics_, config_.solver.thresholds);
      frame.first_iteration_correspondences = &mediated;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoCorrespondences) throw;
    }
  }

  SolverConfig solver = config_.solver;
  if (!config_.skeleton_term) solver.weights.skeleton = 0.0;
  const TrackingModel model{&graph_, &canonical_topology_, &surface_};
  SolveState state{graph_.transforms(), pose_, 0};
  state = solve_gauss_newton(model, state, frame, solver, report, on_iteration);
  graph_.set_transforms(std::move(state.node_transforms));
  pose_ = state.pose;

  integrate_frame(volume_, depth, intrinsics_, graph_, &voxel_cache_);
  canonical_ = extract_mesh(volume_);
  const double area = surface_area(canonical_);
  if (area > (1.0 + config_.graph_growth) * graph_area_) {
    if (graph_.extend(canonical_.vertices, rest_puppet_, rest_index_) > 0) {
      voxel_cache_ = cache_voxel_influences(volume_, graph_);
    }
    graph_area_ = area;
  }
  refresh_surface();

  aligned_ = aligned;
  for (int j = 0; j < canonical_topology_.joint_count(); ++j) {
    if (joints.is_valid(j)) {
      joints_.positions[j] = joints.positions[j];
    }
  }
  ++frames_seen_;
  return warped_canonical();
}

TriangleMesh Reconstructor::warp_canonical(const SolveState& state) const {
  TriangleMesh out;
  out.triangles = canonical_.triangles;
  out.vertices.resize(canonical_.vertices.size());
  out.normals.resize(canonical_.vertices.size());
  for (std::size_t v = 0; v < canonical_.vertices.size(); ++v) {
    const auto& inf = surface_.influences[v];
    TransformBlend blend;
    for (int k = 0; k < inf.count; ++k) blend.add(inf.weight[k], state.node_transforms[inf.node[k]]);
    out.vertices[v] = blend.apply(canonical_.vertices[v]);
    out.normals[v] = blend.apply_normal(canonical_.normals[v]);
  }
  return out;
}

TriangleMesh Reconstructor::warped_canonical() const {
  return warp_canonical(SolveState{graph_.transforms(), pose_, 0});
}

SequenceInfo validate_sequence(const fs::path& dir, int max_frames, const fs::path& puppet_mesh,
                               const fs::path& puppet_weights) {
  auto require = [](const fs::path& p) {
    if (!fs::is_regular_file(p)) throw Error(ErrorKind::kMalformedSequence, "missing file " + p.string());
  };
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kMalformedSequence, "not a directory: " + dir.string());
  SequenceInfo info;
  info.dir = dir;
  require(dir / "intrinsics.json");
  info.intrinsics = read_intrinsics(dir / "intrinsics.json");
  require(puppet_mesh.empty() ? dir / "puppet.obj" : puppet_mesh);
  require(puppet_weights.empty() ? dir / "puppet_weights.csv" : puppet_weights);

  int count = -1;
  if (fs::is_regular_file(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    try {
      count = json::parse(in).at("frame_count").get<int>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kMalformedSequence, "bad manifest " + (dir / "manifest.json").string());
    }
  } else {
    count = count_frames(dir, "depth.png");
  }
  if (max_frames > 0) count = std::min(count, max_frames);
  if (count < 1) throw Error(ErrorKind::kMalformedSequence, "sequence has no frames: " + dir.string());
  for (int f = 0; f < count; ++f) {
    require(frame_file(dir, f, "depth.png"));
    require(frame_file(dir, f, "skeleton.json"));
  }
  info.frame_count = count;
  return info;
}

namespace {

struct LoadedSequence {
  SequenceInfo info;
  SkeletonTopology topology;
  PuppetMesh puppet;
};

LoadedSequence load_sequence(const PipelineConfig& config) {
  LoadedSequence s;
  s.info = validate_sequence(config.sequence_dir, config.frames, config.puppet_mesh, config.puppet_weights);
  const fs::path mesh = config.puppet_mesh.empty() ? config.sequence_dir / "puppet.obj" : config.puppet_mesh;
  const fs::path weights =
      config.puppet_weights.empty() ? config.sequence_dir / "puppet_weights.csv" : config.puppet_weights;
  s.topology = default_topology();
  try {
    s.puppet = load_puppet(mesh, weights);
  } catch (const Error& e) {
    throw Error(ErrorKind::kMalformedSequence, e.what());
  }
  s.puppet.update_labels(config.joint_region_threshold);
  return s;
}

}  // namespace

ReconstructionResult run_reconstruct(const PipelineConfig& config) {
  config.validate();
  const LoadedSequence seq = load_sequence(config);
  const fs::path& dir = config.sequence_dir;
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw Error(ErrorKind::kIoFailure, "cannot create " + config.output_dir.string());

  ReconstructionResult result;
  Reconstructor rec(config, seq.topology, seq.puppet, seq.info.intrinsics);
  auto finish = [&]() {
    write_text(config.output_dir / "diagnostics.csv", diagnostics_csv(result.diagnostics));
    if (!rec.canonical().empty()) write_obj(config.output_dir / "canonical.obj", rec.canonical());
    const json summary = {{"frames_processed", result.frames_processed},
                          {"frames_requested", seq.info.frame_count},
                          {"failed", result.failed},
                          {"failed_frame", result.failed_frame},
                          {"message", result.message}};
    write_text(config.output_dir / "reconstruction.json", summary.dump(2) + "\n");
    write_text(config.output_dir / "config.json", config_to_json(config));
  };

  for (int f = 0; f < seq.info.frame_count; ++f) {
    const DepthImage depth = read_depth(frame_file(dir, f, "depth.png"));
    if (depth.width != seq.info.intrinsics.width || depth.height != seq.info.intrinsics.height) {
      throw Error(ErrorKind::kMalformedSequence,
                  "depth size does not match intrinsics: " + frame_file(dir, f, "depth.png").string());
    }
    const JointObservation joints = read_skeleton(frame_file(dir, f, "skeleton.json"), seq.topology);
    TriangleMesh mesh;
    try {
      if (f == 0) {
        rec.bootstrap(depth, joints);
        mesh = rec.warped_canonical();
      } else {
        SolveReport report;
        mesh = rec.track(depth, joints, &report);
        for (const auto& it : report.iterations) {
          result.diagnostics.push_back({f, it.iteration, it.after, it.correspondences});
        }
      }
    } catch (const Error& e) {
      result.failed = true;
      result.failed_frame = f;
      result.message = e.what();
      break;
    }
    write_obj(frame_file(config.output_dir, f, "recon.obj"), mesh);
    result.frames_processed = f + 1;
  }
  finish();
  return result;
}

std::vector<AblationRow> run_ablation_case(const PipelineConfig& config, const std::string& name,
                                           int first, int second) {
  config.validate();
  PipelineConfig limited = config;
  limited.frames = std::max(first, second) + 1;
  const LoadedSequence seq = load_sequence(limited);
  const fs::path& dir = config.sequence_dir;
  const fs::path gt_path = frame_file(dir, second, "gt.obj");
  if (!fs::is_regular_file(gt_path)) throw Error(ErrorKind::kMalformedSequence, "missing file " + gt_path.string());
  const TriangleMesh gt = read_obj(gt_path);

  Reconstructor rec(config, seq.topology, seq.puppet, seq.info.intrinsics);
  rec.bootstrap(read_depth(frame_file(dir, first, "depth.png")),
                read_skeleton(frame_file(dir, first, "skeleton.json"), seq.topology));
  std::vector<AblationRow> rows;
  rec.track(read_depth(frame_file(dir, second, "depth.png")),
            read_skeleton(frame_file(dir, second, "skeleton.json"), seq.topology), nullptr,
            [&](int iteration, const SolveState& state) {
              rows.push_back({name, iteration, evaluate_frame(iteration, rec.warp_canonical(state), gt)});
            });
  // A solve that converges early leaves the state unchanged for the rest.
  while (!rows.empty() && static_cast<int>(rows.size()) < config.solver.max_iterations) {
    AblationRow next = rows.back();
    ++next.iteration;
    next.metrics.frame = next.iteration;
    rows.push_back(next);
  }
  return rows;
}

std::vector<AblationRow> run_ablation(const PipelineConfig& config) {
  PipelineConfig case1 = config;
  case1.puppet_init = false;
  case1.mediated_correspondence = false;
  PipelineConfig case2 = config;
  case2.puppet_init = true;
  std::vector<AblationRow> rows = run_ablation_case(case1, "case1_no_init", 0, 1);
  const auto with_init = run_ablation_case(case2, "case2_puppet_init", 0, 1);
  rows.insert(rows.end(), with_init.begin(), with_init.end());
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "case,iteration,mean_mm,std_mm,hausdorff,outliers\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.3f,%.3f,%.6f,%d\n", r.name.c_str(), r.iteration,
                  r.metrics.mae_mm, r.metrics.std_mm, r.metrics.hausdorff, r.metrics.outliers);
    out += buf;
  }
  return out;
}

std::vector<FrameMetrics> run_evaluate(const fs::path& recon_dir, const fs::path& sequence_dir) {
  if (!fs::is_directory(recon_dir)) {
    throw Error(ErrorKind::kMalformedSequence, "not a directory: " + recon_dir.string());
  }
  int expected = -1;
  if (fs::is_regular_file(recon_dir / "reconstruction.json")) {
    std::ifstream in(recon_dir / "reconstruction.json");
    try {
      expected = json::parse(in).at("frames_processed").get<int>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::kMalformedSequence, "bad " + (recon_dir / "reconstruction.json").string());
    }
  }
  int present = 0;
  for (const auto& entry : fs::directory_iterator(recon_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("frame_") && name.ends_with("_recon.obj")) ++present;
  }
  if (expected < 0) expected = present;
  if (present != expected) {
    throw Error(ErrorKind::kMalformedSequence, "frame-count mismatch: " + std::to_string(present) +
                                                   " meshes for " + std::to_string(expected) + " frames");
  }
  const int gt_frames = count_frames(sequence_dir, "gt.obj");
  if (expected > gt_frames || expected == 0) {
    throw Error(ErrorKind::kMalformedSequence, "frame-count mismatch: " + std::to_string(expected) +
                                                   " reconstructed, " + std::to_string(gt_frames) +
                                                   " ground-truth frames");
  }
  std::vector<FrameMetrics> rows;
  for (int f = 0; f < expected; ++f) {
    const fs::path recon = frame_file(recon_dir, f, "recon.obj");
    if (!fs::is_regular_file(recon)) throw Error(ErrorKind::kMalformedSequence, "missing file " + recon.string());
    rows.push_back(evaluate_frame(f, read_obj(recon), read_obj(frame_file(sequence_dir, f, "gt.obj"))));
  }
  return rows;
}

}  // namespace puppetrack
