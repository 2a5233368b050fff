#include <fstream>
#include <map>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "puppetrack/error.hpp"
#include "puppetrack/synth.hpp"
#include "support.hpp"

using namespace puppetrack;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Axis-aligned cube with outward normals.
TriangleMesh cube(const Point3& center, double side) {
  TriangleMesh m;
  const double h = side / 2;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back(center + Vec3(i & 1 ? h : -h, i & 2 ? h : -h, i & 4 ? h : -h));
    m.normals.push_back((m.vertices.back() - center).normalized());
  }
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

struct Fixture {
  SkeletonTopology topology = default_topology();
  PuppetMesh puppet = generate_procedural_puppet(topology, default_proportions(topology));
};

}  // namespace

TEST_CASE("render_depth examples") {
  const Intrinsics k = default_intrinsics();
  SUBCASE("sphere center pixel") {
    const TriangleMesh s = testing::uv_sphere(0.3, {0, 0, 2.0}, 64, 128);
    const DepthImage d = render_depth(s, k);
    const int u = static_cast<int>(std::lround(k.cx)), v = static_cast<int>(std::lround(k.cy));
    CHECK(std::abs(d.at(u, v) - 1.7) < 1e-3);
    CHECK(d.to_millimeters()[static_cast<std::size_t>(v) * k.width + u] == 1700);
    CHECK(d.at(0, 0) == 0.0f);
  }
  SUBCASE("empty mesh") {
    const DepthImage d = render_depth(TriangleMesh{}, k);
    CHECK(d.width == k.width);
    CHECK(d.height == k.height);
    for (float m : d.meters) CHECK(m == 0.0f);
  }
  SUBCASE("cube face-on at 2 m") {
    const DepthImage d = render_depth(cube({0, 0, 2.5}, 1.0), k);
    std::map<int, int> histogram;
    for (auto mm : d.to_millimeters()) {
      if (mm) ++histogram[mm];
    }
    REQUIRE(histogram.size() == 1);
    CHECK(histogram.begin()->first == 2000);
    // The face spans 0.5 m / 2 m * f pixels on each side of the center.
    const double half = 0.5 / 2.0 * k.fx;
    CHECK(std::abs(histogram.begin()->second - 4.0 * half * half) < 4.0 * 2.0 * half + 4.0);
  }
}

TEST_CASE("backprojected renders lie on the mesh") {
  const Intrinsics k = default_intrinsics();
  const TriangleMesh s = testing::uv_sphere(0.4, {0.1, -0.05, 2.2}, 64, 128);
  const DepthImage d = render_depth(s, k);
  const TargetCloud c = backproject(DepthImage::from_millimeters(d.width, d.height, d.to_millimeters()), k);
  const TriangleBvh bvh(s.vertices, s.triangles);
  const double footprint = 2.6 / k.fx;  // half a pixel at the far side, in meters
  for (const auto& p : c.valid_points()) CHECK(std::sqrt(bvh.closest(p).distance2) <= 0.001 + footprint);
}

TEST_CASE("render_shading covers the depth silhouette") {
  const Intrinsics k = default_intrinsics();
  const TriangleMesh s = testing::uv_sphere(0.4, {0, 0, 2.0}, 32, 64);
  const DepthImage d = render_depth(s, k);
  const auto g = render_shading(s, k);
  REQUIRE(g.size() == d.meters.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (d.meters[i] == 0.0f) CHECK(g[i] == 0);
  }
  CHECK(g[static_cast<std::size_t>(k.height / 2) * k.width + k.width / 2] > 240);
}

TEST_CASE("motion statistics") {
  SUBCASE("static") {
    const std::vector<std::vector<Point3>> frames(5, std::vector<Point3>{{0, 0, 1}, {1, 0, 1}});
    const MotionStatistics s = motion_statistics(frames);
    CHECK(s.frames == 5);
    CHECK(s.mean == 0.0);
    CHECK(s.min == 0.0);
    CHECK(s.max == 0.0);
    CHECK(s.std == 0.0);
  }
  SUBCASE("one joint moving 1 cm per frame") {
    std::vector<std::vector<Point3>> frames;
    for (int f = 0; f < 6; ++f) frames.push_back({{0, 0, 1}, {0.01 * f, 0, 1}});
    for (double v : per_frame_motion(frames)) CHECK(v == doctest::Approx(0.01).epsilon(1e-12));
    const MotionStatistics s = motion_statistics(frames);
    CHECK(s.mean == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(s.std < 1e-12);
  }
  SUBCASE("too few frames") {
    try {
      motion_statistics({{{0, 0, 0}}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kTooFewFrames);
    }
  }
  SUBCASE("row format") {
    MotionStatistics s;
    s.frames = 245;
    s.mean = 0.650;
    s.min = 0.015;
    s.max = 1.589;
    s.std = 0.312;
    CHECK(format_motion_row("Boxing", s) == "Boxing, 245, 0.650, 0.015, 1.589, 0.312");
  }
}

TEST_CASE("builtin scripts") {
  const Fixture fx;
  for (const auto& name : builtin_script_names()) {
    const MotionScript s = builtin_script(name, fx.topology, 30);
    CHECK(s.duration() == 30);
    CHECK(s.name() == name);
    for (int f = 0; f < 30; ++f) {
      const Pose p = s.pose_at(fx.topology, f);
      CHECK(p.root.translation.allFinite());
      for (const auto& r : p.rotations) CHECK(r.allFinite());
    }
  }
  CHECK_THROWS_AS(builtin_script("moonwalk", fx.topology, 10), Error);
  CHECK_THROWS_AS(builtin_script("static", fx.topology, 0), Error);
  const Pose p0 = builtin_script("static", fx.topology, 3).pose_at(fx.topology, 0);
  CHECK((p0.root.translation - default_root_placement().translation).norm() == 0.0);
}

TEST_CASE("arm_swing moves joints by at least 0.3 m at its peak") {
  const Fixture fx;
  const MotionScript s = builtin_script("arm_swing", fx.topology, 60);
  std::vector<std::vector<Point3>> joints;
  for (int f = 0; f < 60; ++f) joints.push_back(forward_kinematics(fx.topology, s.pose_at(fx.topology, f)).joint_positions);
  CHECK(motion_statistics(joints).max >= 0.3);
}

TEST_CASE("motion script keys interpolate and hold") {
  const Fixture fx;
  MotionScript s("keys", 10, fx.topology.joint_count());
  const int j = fx.topology.find_joint("l_elbow");
  s.add_joint_key(j, 0, Vec3::Zero());
  s.add_joint_key(j, 4, Vec3(0, 0, 1));
  CHECK((s.pose_at(fx.topology, 0).rotations[j]).norm() == 0.0);
  CHECK((s.pose_at(fx.topology, 4).rotations[j] - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((s.pose_at(fx.topology, 9).rotations[j] - Vec3(0, 0, 1)).norm() < 1e-15);
  const double mid = s.pose_at(fx.topology, 2).rotations[j].z();
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
}

TEST_CASE("emit_sequence: static script") {
  const Fixture fx;
  const fs::path dir = testing::scratch_dir("synth_static");
  const SequenceManifest m = emit_sequence(fx.puppet, fx.topology, builtin_script("static", fx.topology, 10),
                                           default_intrinsics(), dir);
  CHECK(m.frame_count == 10);
  CHECK(m.motion.max == 0.0);
  for (const char* f : {"intrinsics.json", "manifest.json", "puppet.obj", "puppet_weights.csv"}) CHECK(fs::exists(dir / f));
  const std::string depth0 = slurp(frame_file(dir, 0, "depth.png")), gt0 = slurp(frame_file(dir, 0, "gt.obj"));
  for (int f = 0; f < 10; ++f) {
    for (const char* s : {"depth.png", "color.png", "skeleton.json", "gt.obj"}) CHECK(fs::exists(frame_file(dir, f, s)));
    CHECK(slurp(frame_file(dir, f, "depth.png")) == depth0);
    CHECK(slurp(frame_file(dir, f, "gt.obj")) == gt0);
  }
  CHECK(frame_file(dir, 7, "gt.obj").filename() == "frame_00007_gt.obj");
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["frame_count"] == 10);
  CHECK(manifest["motion"]["unit"] == "m");
}

TEST_CASE("emit_sequence: root translation only") {
  const Fixture fx;
  MotionScript s("slide", 4, fx.topology.joint_count());
  s.set_base(default_root_placement());
  for (int f = 0; f < 4; ++f) s.add_root_key(f, Vec3(0.02 * f, 0, 0), Vec3::Zero());
  const fs::path dir = testing::scratch_dir("synth_slide");
  emit_sequence(fx.puppet, fx.topology, s, default_intrinsics(), dir, {.color = false});
  CHECK_FALSE(fs::exists(frame_file(dir, 0, "color.png")));
  const TriangleMesh m0 = read_obj(frame_file(dir, 0, "gt.obj"));
  for (int f = 1; f < 4; ++f) {
    const TriangleMesh mf = read_obj(frame_file(dir, f, "gt.obj"));
    REQUIRE(mf.vertices.size() == m0.vertices.size());
    for (std::size_t i = 0; i < m0.vertices.size(); i += 7) {
      CHECK((mf.vertices[i] - m0.vertices[i] - Vec3(0.02 * f, 0, 0)).norm() < 2e-7);
    }
  }
}

TEST_CASE("emitted skeletons equal forward kinematics of the script") {
  const Fixture fx;
  const MotionScript s = builtin_script("arm_swing", fx.topology, 60);
  const fs::path dir = testing::scratch_dir("synth_swing");
  emit_sequence(fx.puppet, fx.topology, s, default_intrinsics(), dir, {.color = false});
  for (int f = 0; f < 60; ++f) {
    const JointObservation obs = read_skeleton(frame_file(dir, f, "skeleton.json"), fx.topology);
    const Kinematics kin = forward_kinematics(fx.topology, s.pose_at(fx.topology, f));
    for (int j = 0; j < fx.topology.joint_count(); ++j) {
      CHECK(obs.valid[j]);
      CHECK((obs.positions[j] - kin.joint_positions[j]).norm() < 1e-12);
    }
  }
}

TEST_CASE("emit_sequence is deterministic") {
  const Fixture fx;
  const MotionScript s = builtin_script("boxing_like", fx.topology, 3);
  const fs::path a = testing::scratch_dir("synth_det_a"), b = testing::scratch_dir("synth_det_b");
  const SynthOptions noisy{.depth_noise_sigma = 0.002, .seed = 9};
  emit_sequence(fx.puppet, fx.topology, s, default_intrinsics(), a, noisy);
  emit_sequence(fx.puppet, fx.topology, s, default_intrinsics(), b, noisy);
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
}

TEST_CASE("emit_sequence reports unwritable directories") {
  const Fixture fx;
  const fs::path dir = testing::scratch_dir("synth_blocked");
  std::ofstream(dir / "file") << "x";
  try {
    emit_sequence(fx.puppet, fx.topology, builtin_script("static", fx.topology, 1), default_intrinsics(), dir / "file" / "seq");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIoFailure);
  }
}

TEST_CASE("sequence file round trips") {
  const fs::path dir = testing::scratch_dir("synth_io");
  SUBCASE("intrinsics") {
    const Intrinsics k{291.5, 290.25, 160.5, 119.75, 320, 240};
    write_intrinsics(dir / "k.json", k);
    const Intrinsics r = read_intrinsics(dir / "k.json");
    CHECK(r.fx == k.fx);
    CHECK(r.fy == k.fy);
    CHECK(r.cx == k.cx);
    CHECK(r.cy == k.cy);
    CHECK(r.width == k.width);
    CHECK(r.height == k.height);
    CHECK_THROWS_AS(read_intrinsics(dir / "missing.json"), Error);
  }
  SUBCASE("16-bit png") {
    std::vector<std::uint16_t> px = {0, 1, 255, 256, 1000, 65535};
    write_png16(dir / "d.png", 3, 2, px);
    int w = 0, h = 0;
    CHECK(read_png16(dir / "d.png", w, h) == px);
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK_THROWS_AS(read_png16(dir / "missing.png", w, h), Error);
  }
  SUBCASE("depth") {
    DepthImage d(2, 2);
    d.meters = {0.0f, 1.0f, 2.5f, 3.0004f};
    write_depth(dir / "depth.png", d);
    const DepthImage r = read_depth(dir / "depth.png");
    CHECK(r.meters[0] == 0.0f);
    CHECK(r.meters[2] == 2.5f);
    CHECK(std::abs(r.meters[3] - 3.0f) < 1e-6f);
  }
  SUBCASE("skeleton with missing joints") {
    const SkeletonTopology t = default_topology();
    JointObservation obs = JointObservation::all_valid(t.rest_positions());
    obs.valid[t.find_joint("l_wrist")] = false;
    write_skeleton(dir / "s.json", t, obs, 3);
    const JointObservation r = read_skeleton(dir / "s.json", t);
    for (int j = 0; j < t.joint_count(); ++j) {
      CHECK(r.valid[j] == obs.valid[j]);
      if (r.valid[j]) CHECK((r.positions[j] - obs.positions[j]).norm() == 0.0);
    }
    auto doc = nlohmann::json::parse(slurp(dir / "s.json"));
    CHECK(doc["frame"] == 3);
  }
}
