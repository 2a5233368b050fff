#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "puppetrack/correspond.hpp"
#include "puppetrack/defgraph.hpp"
#include "puppetrack/eval.hpp"
#include "puppetrack/fusion.hpp"
#include "puppetrack/puppet.hpp"
#include "puppetrack/skeleton.hpp"
#include "puppetrack/solver.hpp"

namespace puppetrack {

struct PipelineConfig {
  std::filesystem::path sequence_dir;
  std::filesystem::path output_dir = "recon";
  std::filesystem::path puppet_mesh;     // defaults to <sequence>/puppet.obj
  std::filesystem::path puppet_weights;  // defaults to <sequence>/puppet_weights.csv
  int frames = -1;                       // all

  SolverConfig solver;
  GraphConfig graph;
  double graph_growth = 0.10;  // canonical area growth that triggers node insertion
  VolumeConfig volume;
  AlignConfig align;
  double joint_region_threshold = kJointRegionThreshold;

  bool puppet_init = true;
  bool skeleton_term = true;
  bool mediated_correspondence = true;

  /// Throws kInvalidArgument for non-positive sizes or iteration counts.
  void validate() const;
};

/// Reads a JSON config; unspecified keys keep their defaults. Relative paths
/// resolve against the current directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& config);

struct DiagnosticsRow {
  int frame = 0;
  int iteration = 0;
  EnergyTerms energy;
  int correspondences = 0;
};

/// frame,iteration,E_data,E_arap,E_skeleton,E_reg,total,n_corr
std::string diagnostics_csv(const std::vector<DiagnosticsRow>& rows);

/// Incremental tracker: canonical TSDF model, deformation graph, skeleton
/// pose and the puppet aligned to the previous frame.
class Reconstructor {
 public:
  Reconstructor(PipelineConfig config, SkeletonTopology topology, PuppetMesh template_puppet,
                Intrinsics intrinsics);

  /// Frame-1 bootstrap: fits the template puppet to the joints, fuses the
  /// depth with the identity warp and builds the graph on the result.
  void bootstrap(const DepthImage& depth, const JointObservation& joints);

  /// Tracks and fuses one frame; returns the warped canonical mesh. The
  /// callback sees each solver iteration's state.
  TriangleMesh track(const DepthImage& depth, const JointObservation& joints,
                     SolveReport* report = nullptr, const IterationCallback& on_iteration = {});

  /// Canonical mesh carried by the graph under `state` (or the current warp).
  TriangleMesh warp_canonical(const SolveState& state) const;
  TriangleMesh warped_canonical() const;

  const TriangleMesh& canonical() const { return canonical_; }
  const DeformationGraph& graph() const { return graph_; }
  const SkeletonTopology& canonical_topology() const { return canonical_topology_; }
  const PuppetMesh& rest_puppet() const { return rest_puppet_; }
  const AlignedPuppet& aligned() const { return aligned_; }
  const Pose& pose() const { return pose_; }
  const TsdfVolume& volume() const { return volume_; }
  int frames_seen() const { return frames_seen_; }

 private:
  void refresh_surface();

  PipelineConfig config_;
  SkeletonTopology template_topology_;
  PuppetMesh template_puppet_;
  Intrinsics intrinsics_;

  SkeletonTopology canonical_topology_;
  PuppetMesh rest_puppet_;
  KdTree rest_index_;
  TsdfVolume volume_;
  VoxelInfluenceCache voxel_cache_;
  TriangleMesh canonical_;
  double graph_area_ = 0.0;
  DeformationGraph graph_;
  TrackingSurface surface_;
  Pose pose_;
  AlignedPuppet aligned_;
  JointObservation joints_;
  int frames_seen_ = 0;
};

/// Sequence directory contents after validation.
struct SequenceInfo {
  std::filesystem::path dir;
  Intrinsics intrinsics;
  int frame_count = 0;
};

/// Checks that intrinsics, puppet and every frame's depth and skeleton files
/// exist. Throws kMalformedSequence naming the first missing file.
SequenceInfo validate_sequence(const std::filesystem::path& dir, int max_frames,
                               const std::filesystem::path& puppet_mesh = {},
                               const std::filesystem::path& puppet_weights = {});

struct ReconstructionResult {
  int frames_processed = 0;
  bool failed = false;
  int failed_frame = -1;
  std::string message;
  std::vector<DiagnosticsRow> diagnostics;
};

/// Runs the full pipeline and writes frame_%05d_recon.obj, diagnostics.csv,
/// canonical.obj and reconstruction.json into the output directory. Tracking
/// errors stop the run with failed = true; files written so far are kept.
ReconstructionResult run_reconstruct(const PipelineConfig& config);

/// Per-iteration metrics of one tracked pair, for the initialization ablation.
struct AblationRow {
  std::string name;
  int iteration = 0;
  FrameMetrics metrics;
};

/// Bootstraps on `first` and tracks `second`, measuring the warped canonical
/// mesh against that frame's ground truth after every solver iteration.
std::vector<AblationRow> run_ablation_case(const PipelineConfig& config, const std::string& name,
                                           int first, int second);

/// Case 1 (no puppet initialization: neither the graph warp nor the
/// mediated first-iteration pairs) and case 2 (full) on frames 0 -> 1.
std::vector<AblationRow> run_ablation(const PipelineConfig& config);
std::string ablation_table(const std::vector<AblationRow>& rows);

/// Pairs frame_%05d_recon.obj with frame_%05d_gt.obj. Throws
/// kMalformedSequence when the recon set does not match the sequence.
std::vector<FrameMetrics> run_evaluate(const std::filesystem::path& recon_dir,
                                       const std::filesystem::path& sequence_dir);

}  // namespace puppetrack
