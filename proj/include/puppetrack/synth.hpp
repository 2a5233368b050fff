#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "puppetrack/correspond.hpp"
#include "puppetrack/mesh.hpp"
#include "puppetrack/puppet.hpp"
#include "puppetrack/skeleton.hpp"

namespace puppetrack {

/// Camera used by the built-in sequences: 320x240, f = 290 px.
Intrinsics default_intrinsics();

/// Root placement of the built-in scripts: hips about 3 m in front of the camera.
RigidTransform default_root_placement();

/// Piecewise-cubic (Catmull-Rom) keyframed motion. Curves hold their end
/// values outside the keyed range.
class MotionScript {
 public:
  MotionScript() = default;
  MotionScript(std::string name, int duration, int joint_count);

  const std::string& name() const { return name_; }
  int duration() const { return duration_; }

  /// Rotation-vector key for a non-root joint (radians).
  void add_joint_key(int joint, double frame, const Vec3& rotation);
  /// Root key: translation (meters) and rotation vector, applied after the
  /// base placement.
  void add_root_key(double frame, const Vec3& translation, const Vec3& rotation);
  void set_base(const RigidTransform& base) { base_ = base; }

  Pose pose_at(const SkeletonTopology& topology, double frame) const;

 private:
  struct Key {
    double frame;
    Vec3 value;
  };
  static Vec3 sample(const std::vector<Key>& keys, double frame);

  std::string name_;
  int duration_ = 0;
  RigidTransform base_;
  std::vector<std::vector<Key>> joint_keys_;
  std::vector<Key> root_translation_;
  std::vector<Key> root_rotation_;
};

/// "static", "arm_swing", "jump", "boxing_like".
std::vector<std::string> builtin_script_names();
/// Throws kInvalidArgument for unknown names or non-positive frame counts.
MotionScript builtin_script(const std::string& name, const SkeletonTopology& topology, int frames);

/// Z-buffered rasterization: nearest hit along each pixel's ray, 0 on miss.
DepthImage render_depth(const TriangleMesh& mesh, const Intrinsics& intrinsics);
/// Flat-shaded 8-bit gray image of the same view (|cos| to the view ray).
std::vector<std::uint8_t> render_shading(const TriangleMesh& mesh, const Intrinsics& intrinsics);

struct MotionStatistics {
  int frames = 0;
  double mean = 0.0, min = 0.0, max = 0.0, std = 0.0;  // meters per frame
};

/// Per frame t >= 1: sum over joints of |j_t - j_{t-1}|; population
/// statistics over those values. Throws kTooFewFrames below two frames.
MotionStatistics motion_statistics(const std::vector<std::vector<Point3>>& joints_per_frame);
std::vector<double> per_frame_motion(const std::vector<std::vector<Point3>>& joints_per_frame);
/// "Name, N, Mean, Min, Max, Std" row.
std::string format_motion_row(const std::string& name, const MotionStatistics& stats);

struct SynthOptions {
  double depth_noise_sigma = 0.0;  // meters
  std::uint64_t seed = 1;
  bool color = true;
};

struct SequenceManifest {
  std::string script;
  int frame_count = 0;
  Intrinsics intrinsics;
  MotionStatistics motion;
};

/// Writes a sequence directory:
///   intrinsics.json, manifest.json, puppet.obj, puppet_weights.csv and per
///   frame frame_%05d_{depth.png, color.png, skeleton.json, gt.obj}.
/// Throws kIoFailure when files cannot be written.
SequenceManifest emit_sequence(const PuppetMesh& puppet, const SkeletonTopology& topology,
                               const MotionScript& script, const Intrinsics& intrinsics,
                               const std::filesystem::path& out_dir,
                               const SynthOptions& options = {});

// Sequence directory access.
std::filesystem::path frame_file(const std::filesystem::path& dir, int frame,
                                 const std::string& suffix);
void write_intrinsics(const std::filesystem::path& path, const Intrinsics& intrinsics);
Intrinsics read_intrinsics(const std::filesystem::path& path);
void write_skeleton(const std::filesystem::path& path, const SkeletonTopology& topology,
                    const JointObservation& joints, int frame);
/// Joints are matched by name; absent names are marked invalid.
JointObservation read_skeleton(const std::filesystem::path& path, const SkeletonTopology& topology);

void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& pixels);
std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int& width, int& height);
void write_png8(const std::filesystem::path& path, int width, int height,
                const std::vector<std::uint8_t>& pixels);

void write_depth(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_depth(const std::filesystem::path& path);

}  // namespace puppetrack
