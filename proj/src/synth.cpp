#include "puppetrack/synth.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "puppetrack/error.hpp"

namespace puppetrack {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMalformedSequence, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedSequence, "bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed: " + path.string());
}

struct PngFile {
  FILE* fp = nullptr;
  ~PngFile() {
    if (fp) std::fclose(fp);
  }
};

void write_png(const fs::path& path, int width, int height, int depth,
               const std::vector<png_bytep>& rows) {
  PngFile file;
  file.fp = std::fopen(path.c_str(), "wb");
  if (!file.fp) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::kIoFailure, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::kIoFailure, "PNG encoding failed: " + path.string());
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, width, height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * (2.0 * p1 + (p2 - p0) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * u3);
}

// Keys every `step` frames from a closed-form curve, one past the end so the
// spline covers the whole range.
template <typename Fn>
void key_curve(MotionScript& script, int joint, int frames, int step, Fn&& fn) {
  for (int f = 0; f <= frames + step; f += step) script.add_joint_key(joint, f, fn(f));
}

}  // namespace

Intrinsics default_intrinsics() {
  Intrinsics k;
  k.fx = k.fy = 290.0;
  k.cx = 159.5;
  k.cy = 119.5;
  k.width = 320;
  k.height = 240;
  return k;
}

RigidTransform default_root_placement() { return RigidTransform::translate(Vec3(0.0, -0.05, 3.0)); }

MotionScript::MotionScript(std::string name, int duration, int joint_count)
    : name_(std::move(name)), duration_(duration), base_(default_root_placement()),
      joint_keys_(joint_count) {
  if (duration <= 0) throw Error(ErrorKind::kInvalidArgument, "script duration must be positive");
}

void MotionScript::add_joint_key(int joint, double frame, const Vec3& rotation) {
  if (joint <= 0 || joint >= static_cast<int>(joint_keys_.size())) {
    throw Error(ErrorKind::kInvalidArgument, "joint key out of range");
  }
  auto& keys = joint_keys_[joint];
  keys.push_back({frame, rotation});
  std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) { return a.frame < b.frame; });
}

void MotionScript::add_root_key(double frame, const Vec3& translation, const Vec3& rotation) {
  root_translation_.push_back({frame, translation});
  root_rotation_.push_back({frame, rotation});
  auto by_frame = [](const Key& a, const Key& b) { return a.frame < b.frame; };
  std::stable_sort(root_translation_.begin(), root_translation_.end(), by_frame);
  std::stable_sort(root_rotation_.begin(), root_rotation_.end(), by_frame);
}

Vec3 MotionScript::sample(const std::vector<Key>& keys, double frame) {
  if (keys.empty()) return Vec3::Zero();
  if (frame <= keys.front().frame) return keys.front().value;
  if (frame >= keys.back().frame) return keys.back().value;
  std::size_t i = 0;
  while (keys[i + 1].frame <= frame) ++i;
  if (keys[i].frame == frame) return keys[i].value;
  const std::size_t last = keys.size() - 1;
  const Vec3& p0 = keys[i == 0 ? 0 : i - 1].value;
  const Vec3& p3 = keys[std::min(i + 2, last)].value;
  const double u = (frame - keys[i].frame) / (keys[i + 1].frame - keys[i].frame);
  return catmull_rom(p0, keys[i].value, keys[i + 1].value, p3, u);
}

Pose MotionScript::pose_at(const SkeletonTopology& topology, double frame) const {
  if (topology.joint_count() != static_cast<int>(joint_keys_.size())) {
    throw Error(ErrorKind::kInvalidArgument, "script and topology disagree on joint count");
  }
  Pose pose = Pose::zero(topology);
  const RigidTransform local{exp_so3(sample(root_rotation_, frame)), sample(root_translation_, frame)};
  pose.root = base_ * local;
  for (int j = 1; j < topology.joint_count(); ++j) pose.rotations[j] = sample(joint_keys_[j], frame);
  return pose;
}

std::vector<std::string> builtin_script_names() { return {"static", "arm_swing", "jump", "boxing_like"}; }

MotionScript builtin_script(const std::string& name, const SkeletonTopology& topology, int frames) {
  if (frames <= 0) throw Error(ErrorKind::kInvalidArgument, "frame count must be positive");
  MotionScript script(name, frames, topology.joint_count());
  auto joint = [&](const char* n) {
    const int j = topology.find_joint(n);
    if (j < 0) throw Error(ErrorKind::kInvalidArgument, std::string("topology lacks joint ") + n);
    return j;
  };
  const double two_pi = 2.0 * std::numbers::pi;

  if (name == "static") return script;

  if (name == "arm_swing") {
    const double amplitude = 50.0 * kDeg, period = 16.0;
    auto swing = [&](int f) { return amplitude * std::sin(two_pi * f / period); };
    key_curve(script, joint("l_shoulder"), frames, 2, [&](int f) { return Vec3(0, 0, swing(f)); });
    key_curve(script, joint("r_shoulder"), frames, 2, [&](int f) { return Vec3(0, 0, -swing(f)); });
    key_curve(script, joint("l_elbow"), frames, 2, [&](int f) { return Vec3(0, 0, 0.3 * swing(f)); });
    key_curve(script, joint("r_elbow"), frames, 2, [&](int f) { return Vec3(0, 0, -0.3 * swing(f)); });
    return script;
  }

  if (name == "jump") {
    const double period = 20.0;
    auto crouch = [&](int f) {
      const double s = std::sin(std::numbers::pi * f / period);
      return s * s;
    };
    for (int f = 0; f <= frames + 2; f += 2) {
      const double lift = std::max(0.0, std::sin(two_pi * f / period));
      script.add_root_key(f, Vec3(0, -0.20 * lift, 0), Vec3::Zero());
    }
    key_curve(script, joint("l_hip"), frames, 2, [&](int f) { return Vec3(0.5 * crouch(f), 0, 0); });
    key_curve(script, joint("r_hip"), frames, 2, [&](int f) { return Vec3(0.5 * crouch(f), 0, 0); });
    key_curve(script, joint("l_knee"), frames, 2, [&](int f) { return Vec3(-0.9 * crouch(f), 0, 0); });
    key_curve(script, joint("r_knee"), frames, 2, [&](int f) { return Vec3(-0.9 * crouch(f), 0, 0); });
    key_curve(script, joint("l_shoulder"), frames, 2, [&](int f) { return Vec3(0, 0, -0.8 * crouch(f)); });
    key_curve(script, joint("r_shoulder"), frames, 2, [&](int f) { return Vec3(0, 0, 0.8 * crouch(f)); });
    return script;
  }

  if (name == "boxing_like") {
    const double period = 12.0;
    auto left = [&](int f) { return std::max(0.0, std::sin(two_pi * f / period)); };
    auto right = [&](int f) { return std::max(0.0, -std::sin(two_pi * f / period)); };
    key_curve(script, joint("spine"), frames, 2,
              [&](int f) { return Vec3(0, 0.25 * std::sin(two_pi * f / period), 0); });
    key_curve(script, joint("l_shoulder"), frames, 2,
              [&](int f) { return Vec3(0, 0.9 + 0.5 * left(f), 0.9 - 0.8 * left(f)); });
    key_curve(script, joint("r_shoulder"), frames, 2,
              [&](int f) { return Vec3(0, -0.9 - 0.5 * right(f), -0.9 + 0.8 * right(f)); });
    key_curve(script, joint("l_elbow"), frames, 2, [&](int f) { return Vec3(0, 1.8 * (1.0 - left(f)), 0); });
    key_curve(script, joint("r_elbow"), frames, 2, [&](int f) { return Vec3(0, -1.8 * (1.0 - right(f)), 0); });
    return script;
  }

  throw Error(ErrorKind::kInvalidArgument, "unknown motion script '" + name + "'");
}

namespace {

// Rasterizes every triangle and calls hit(pixel, depth, triangle) for pixels
// it covers; depth is the exact ray-plane intersection.
template <typename Hit>
void rasterize(const TriangleMesh& mesh, const Intrinsics& k, Hit&& hit) {
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point3& a = mesh.vertices[tri[0]];
    const Point3& b = mesh.vertices[tri[1]];
    const Point3& c = mesh.vertices[tri[2]];
    if (a.z() <= 1e-6 || b.z() <= 1e-6 || c.z() <= 1e-6) continue;
    const Vec3 n = (b - a).cross(c - a);
    if (n.squaredNorm() == 0.0) continue;
    auto proj = [&](const Point3& p) {
      return Eigen::Vector2d(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
    };
    const Eigen::Vector2d pa = proj(a), pb = proj(b), pc = proj(c);
    auto edge = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, double x, double y) {
      return (q.x() - p.x()) * (y - p.y()) - (q.y() - p.y()) * (x - p.x());
    };
    const double area = edge(pa, pb, pc.x(), pc.y());
    if (area == 0.0) continue;
    const double sign = area > 0.0 ? 1.0 : -1.0;
    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}))));
    const int u1 = std::min(k.width - 1, static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}))));
    const int v1 = std::min(k.height - 1, static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}))));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        if (sign * edge(pa, pb, u, v) < 0.0 || sign * edge(pb, pc, u, v) < 0.0 ||
            sign * edge(pc, pa, u, v) < 0.0) {
          continue;
        }
        const Vec3 ray((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        const double denom = n.dot(ray);
        if (std::abs(denom) < 1e-15) continue;
        const double z = n.dot(a) / denom;
        if (z > 0.0) hit(static_cast<std::size_t>(v) * k.width + u, z, t, ray);
      }
    }
  }
}

}  // namespace

DepthImage render_depth(const TriangleMesh& mesh, const Intrinsics& intrinsics) {
  intrinsics.validate();
  DepthImage depth(intrinsics.width, intrinsics.height);
  std::vector<double> zbuf(depth.meters.size(), 0.0);
  rasterize(mesh, intrinsics, [&](std::size_t pixel, double z, std::size_t, const Vec3&) {
    if (zbuf[pixel] == 0.0 || z < zbuf[pixel]) zbuf[pixel] = z;
  });
  for (std::size_t i = 0; i < zbuf.size(); ++i) depth.meters[i] = static_cast<float>(zbuf[i]);
  return depth;
}

std::vector<std::uint8_t> render_shading(const TriangleMesh& mesh, const Intrinsics& intrinsics) {
  intrinsics.validate();
  const std::size_t n = static_cast<std::size_t>(intrinsics.width) * intrinsics.height;
  std::vector<double> zbuf(n, 0.0);
  std::vector<std::uint8_t> gray(n, 0);
  rasterize(mesh, intrinsics, [&](std::size_t pixel, double z, std::size_t t, const Vec3& ray) {
    if (zbuf[pixel] != 0.0 && z >= zbuf[pixel]) return;
    zbuf[pixel] = z;
    const Vec3 normal = triangle_normal(mesh, static_cast<int>(t));
    const double shade = std::abs(normal.dot(ray.normalized()));
    gray[pixel] = static_cast<std::uint8_t>(std::lround(40.0 + 215.0 * shade));
  });
  return gray;
}

std::vector<double> per_frame_motion(const std::vector<std::vector<Point3>>& joints_per_frame) {
  std::vector<double> out;
  for (std::size_t t = 1; t < joints_per_frame.size(); ++t) {
    const auto& prev = joints_per_frame[t - 1];
    const auto& curr = joints_per_frame[t];
    if (prev.size() != curr.size()) throw Error(ErrorKind::kInvalidArgument, "joint count changes");
    double sum = 0.0;
    for (std::size_t j = 0; j < curr.size(); ++j) sum += (curr[j] - prev[j]).norm();
    out.push_back(sum);
  }
  return out;
}

MotionStatistics motion_statistics(const std::vector<std::vector<Point3>>& joints_per_frame) {
  if (joints_per_frame.size() < 2) throw Error(ErrorKind::kTooFewFrames, "need at least two frames");
  const std::vector<double> values = per_frame_motion(joints_per_frame);
  MotionStatistics s;
  s.frames = static_cast<int>(joints_per_frame.size());
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / values.size();
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / values.size());
  return s;
}

std::string format_motion_row(const std::string& name, const MotionStatistics& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s, %d, %.3f, %.3f, %.3f, %.3f", name.c_str(), s.frames, s.mean,
                s.min, s.max, s.std);
  return buf;
}

fs::path frame_file(const fs::path& dir, int frame, const std::string& suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frame_%05d_%s", frame, suffix.c_str());
  return dir / buf;
}

void write_intrinsics(const fs::path& path, const Intrinsics& k) {
  const json j = {{"fx", k.fx},         {"fy", k.fy},         {"cx", k.cx},        {"cy", k.cy},
                  {"width", k.width},   {"height", k.height}, {"depth_unit_mm", 1}};
  write_text(path, j.dump(2) + "\n");
}

Intrinsics read_intrinsics(const fs::path& path) {
  const json j = read_json(path);
  Intrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    if (j.value("depth_unit_mm", 1.0) != 1.0) {
      throw Error(ErrorKind::kMalformedSequence, "unsupported depth unit in " + path.string());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedSequence, "bad intrinsics in " + path.string() + ": " + e.what());
  }
  if (!k.valid()) throw Error(ErrorKind::kMalformedSequence, "invalid intrinsics in " + path.string());
  return k;
}

void write_skeleton(const fs::path& path, const SkeletonTopology& topology,
                    const JointObservation& joints, int frame) {
  json list = json::array();
  for (int j = 0; j < topology.joint_count(); ++j) {
    const Point3& p = joints.positions[j];
    list.push_back({{"name", topology.joint(j).name},
                    {"x", p.x()},
                    {"y", p.y()},
                    {"z", p.z()},
                    {"valid", joints.is_valid(j)}});
  }
  const json doc = {{"frame", frame}, {"joints", list}};
  write_text(path, doc.dump(2) + "\n");
}

JointObservation read_skeleton(const fs::path& path, const SkeletonTopology& topology) {
  const json doc = read_json(path);
  JointObservation obs;
  obs.positions.assign(topology.joint_count(), Point3::Zero());
  obs.valid.assign(topology.joint_count(), false);
  try {
    for (const auto& item : doc.at("joints")) {
      const int j = topology.find_joint(item.at("name").get<std::string>());
      if (j < 0) continue;
      obs.positions[j] = Point3(item.at("x").get<double>(), item.at("y").get<double>(),
                                item.at("z").get<double>());
      obs.valid[j] = item.value("valid", true) && obs.positions[j].allFinite();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedSequence, "bad skeleton in " + path.string() + ": " + e.what());
  }
  return obs;
}

void write_png16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::kInvalidArgument, "pixel count mismatch");
  }
  std::vector<png_byte> bytes(pixels.size() * 2);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bytes[2 * i] = static_cast<png_byte>(pixels[i] >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(pixels[i] & 0xff);
  }
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) rows[v] = bytes.data() + static_cast<std::size_t>(v) * width * 2;
  write_png(path, width, height, 16, rows);
}

void write_png8(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::kInvalidArgument, "pixel count mismatch");
  }
  std::vector<png_byte> bytes(pixels.begin(), pixels.end());
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) rows[v] = bytes.data() + static_cast<std::size_t>(v) * width;
  write_png(path, width, height, 8, rows);
}

std::vector<std::uint16_t> read_png16(const fs::path& path, int& width, int& height) {
  PngFile file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (!file.fp) throw Error(ErrorKind::kMalformedSequence, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::kIoFailure, "libpng initialization failed");
  }
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::kMalformedSequence, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::kMalformedSequence, "depth image must be 16-bit gray: " + path.string());
  }
  bytes.resize(static_cast<std::size_t>(w) * h * 2);
  rows.resize(h);
  for (int v = 0; v < h; ++v) rows[v] = bytes.data() + static_cast<std::size_t>(v) * w * 2;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  width = w;
  height = h;
  return pixels;
}

void write_depth(const fs::path& path, const DepthImage& depth) {
  write_png16(path, depth.width, depth.height, depth.to_millimeters());
}

DepthImage read_depth(const fs::path& path) {
  int w = 0, h = 0;
  const auto mm = read_png16(path, w, h);
  return DepthImage::from_millimeters(w, h, mm);
}

SequenceManifest emit_sequence(const PuppetMesh& puppet, const SkeletonTopology& topology,
                               const MotionScript& script, const Intrinsics& intrinsics,
                               const fs::path& out_dir, const SynthOptions& options) {
  intrinsics.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  write_intrinsics(out_dir / "intrinsics.json", intrinsics);
  save_puppet(out_dir / "puppet.obj", out_dir / "puppet_weights.csv", puppet);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<Point3>> joints;
  for (int f = 0; f < script.duration(); ++f) {
    const Pose pose = script.pose_at(topology, f);
    const Kinematics kin = forward_kinematics(topology, pose);
    const SkinnedSurface surface = skin(puppet, kin.bone_transforms(topology));
    TriangleMesh mesh{surface.vertices, surface.normals, puppet.mesh.triangles};
    write_obj(frame_file(out_dir, f, "gt.obj"), mesh);

    DepthImage depth = render_depth(mesh, intrinsics);
    if (options.depth_noise_sigma > 0.0) {
      for (float& d : depth.meters) {
        if (d > 0.0f) d = static_cast<float>(std::max(0.0, d + options.depth_noise_sigma * noise(rng)));
      }
    }
    write_depth(frame_file(out_dir, f, "depth.png"), depth);
    if (options.color) {
      write_png8(frame_file(out_dir, f, "color.png"), intrinsics.width, intrinsics.height,
                 render_shading(mesh, intrinsics));
    }
    write_skeleton(frame_file(out_dir, f, "skeleton.json"), topology,
                   JointObservation::all_valid(kin.joint_positions), f);
    joints.push_back(kin.joint_positions);
  }

  SequenceManifest manifest;
  manifest.script = script.name();
  manifest.frame_count = script.duration();
  manifest.intrinsics = intrinsics;
  if (joints.size() >= 2) {
    manifest.motion = motion_statistics(joints);
  } else {
    manifest.motion.frames = static_cast<int>(joints.size());
  }
  const auto& m = manifest.motion;
  const json doc = {
      {"script", manifest.script},
      {"frame_count", manifest.frame_count},
      {"intrinsics", "intrinsics.json"},
      {"puppet", {{"mesh", "puppet.obj"}, {"weights", "puppet_weights.csv"}}},
      {"motion", {{"name", manifest.script}, {"frames", m.frames}, {"mean", m.mean}, {"min", m.min},
                  {"max", m.max}, {"std", m.std}, {"unit", "m"}}},
      {"units", {{"length", "m"}, {"depth", "mm"}, {"angle", "rad"}}},
      {"depth_noise_sigma", options.depth_noise_sigma},
      {"seed", options.seed},
  };
  write_text(out_dir / "manifest.json", doc.dump(2) + "\n");
  return manifest;
}

}  // namespace puppetrack
