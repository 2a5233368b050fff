#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>

#include "puppetrack/error.hpp"
#include "puppetrack/pipeline.hpp"
#include "puppetrack/puppet.hpp"
#include "puppetrack/synth.hpp"

namespace puppetrack {
namespace fs = std::filesystem;

namespace {

struct TrackingFlags {
  std::string config;
  std::string sequence;
  std::string out;
  int frames = -1;
  int iterations = -1;
  bool no_puppet_init = false;
  bool no_skeleton_term = false;
  bool no_mediated = false;
};

void add_tracking_flags(CLI::App* cmd, TrackingFlags& f) {
  cmd->add_option("--config", f.config, "JSON pipeline configuration");
  cmd->add_option("--sequence,sequence", f.sequence, "sequence directory");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--frames", f.frames, "process at most this many frames");
  cmd->add_option("--iterations", f.iterations, "Gauss-Newton iterations per frame");
  cmd->add_flag("--no-puppet-init", f.no_puppet_init, "skip puppet-based graph initialization");
  cmd->add_flag("--no-skeleton-term", f.no_skeleton_term, "drop the skeleton energy term");
  cmd->add_flag("--no-mediated-corr", f.no_mediated, "use projective association on every iteration");
}

PipelineConfig resolve(const TrackingFlags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (!f.sequence.empty()) c.sequence_dir = f.sequence;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.frames > 0) c.frames = f.frames;
  if (f.iterations != -1) c.solver.max_iterations = f.iterations;
  if (f.no_puppet_init) c.puppet_init = false;
  if (f.no_skeleton_term) c.skeleton_term = false;
  if (f.no_mediated) c.mediated_correspondence = false;
  if (c.sequence_dir.empty()) throw Error(ErrorKind::kInvalidArgument, "no sequence directory given");
  c.validate();
  return c;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kMalformedSequence:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kBadIntrinsics:
      return kExitMalformedInput;
    case ErrorKind::kIoFailure:
      return kExitFailure;
    default:
      return kExitTrackingFailure;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Puppet-assisted non-rigid tracking and fusion"};
  app.require_subcommand(1);

  std::string script = "arm_swing";
  int gen_frames = 60;
  std::string gen_out = "sequence";
  double noise = 0.0;
  std::uint64_t seed = 1;
  bool no_color = false;
  auto* generate = app.add_subcommand("generate", "write a synthetic sequence");
  generate->add_option("--script", script, "static, arm_swing, jump or boxing_like");
  generate->add_option("--frames", gen_frames, "frame count");
  generate->add_option("--out", gen_out, "output directory");
  generate->add_option("--noise", noise, "depth noise sigma in meters");
  generate->add_option("--seed", seed, "noise seed");
  generate->add_flag("--no-color", no_color, "skip shaded color images");

  TrackingFlags recon_flags;
  auto* reconstruct = app.add_subcommand("reconstruct", "track and fuse a sequence");
  add_tracking_flags(reconstruct, recon_flags);

  std::string eval_recon, eval_sequence, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "compare reconstructions with ground truth");
  evaluate->add_option("--recon,recon", eval_recon, "reconstruction directory")->required();
  evaluate->add_option("--sequence,sequence", eval_sequence, "sequence directory")->required();
  evaluate->add_option("--out", eval_out, "metrics CSV (default <recon>/metrics.csv)");

  TrackingFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "initialization ablation on frames 0 -> 1");
  add_tracking_flags(ablate, ablate_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << e.what() << "\n";
    return kExitMalformedInput;
  }

  try {
    if (*generate) {
      const auto names = builtin_script_names();
      if (std::find(names.begin(), names.end(), script) == names.end()) {
        err << "unknown script '" << script << "'\n";
        return kExitMalformedInput;
      }
      const SkeletonTopology topology = default_topology();
      const PuppetMesh puppet = generate_procedural_puppet(topology, default_proportions(topology));
      SynthOptions options;
      options.depth_noise_sigma = noise;
      options.seed = seed;
      options.color = !no_color;
      const SequenceManifest m = emit_sequence(puppet, topology, builtin_script(script, topology, gen_frames),
                                               default_intrinsics(), gen_out, options);
      out << "Name, N, Mean, Min, Max, Std\n" << format_motion_row(m.script, m.motion) << "\n";
      return kExitOk;
    }

    if (*reconstruct) {
      const PipelineConfig config = resolve(recon_flags);
      const ReconstructionResult r = run_reconstruct(config);
      out << "processed " << r.frames_processed << " frames into " << config.output_dir.string() << "\n";
      if (r.failed) {
        err << "tracking failed at frame " << r.failed_frame << ": " << r.message << "\n";
        return kExitTrackingFailure;
      }
      return kExitOk;
    }

    if (*evaluate) {
      const auto rows = run_evaluate(eval_recon, eval_sequence);
      const fs::path csv = eval_out.empty() ? fs::path(eval_recon) / "metrics.csv" : fs::path(eval_out);
      write_metrics_csv(csv, rows);
      out << metrics_csv(rows);
      return kExitOk;
    }

    if (*ablate) {
      const PipelineConfig config = resolve(ablate_flags);
      const auto rows = run_ablation(config);
      const std::string table = ablation_table(rows);
      out << table;
      if (!ablate_flags.out.empty()) {
        fs::create_directories(ablate_flags.out);
        std::ofstream(fs::path(ablate_flags.out) / "ablation.csv", std::ios::binary) << table;
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace puppetrack
