#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "puppetrack/error.hpp"
#include "puppetrack/eval.hpp"
#include "puppetrack/fusion.hpp"
#include "puppetrack/pipeline.hpp"
#include "puppetrack/synth.hpp"

namespace py = pybind11;
using namespace puppetrack;

namespace {

using Rows = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Faces = py::array_t<int, py::array::c_style | py::array::forcecast>;

Rows to_array(const std::vector<Vec3>& v) {
  Rows out({static_cast<py::ssize_t>(v.size()), py::ssize_t{3}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (int k = 0; k < 3; ++k) a(i, k) = v[i][k];
  }
  return out;
}

std::vector<Vec3> from_array(const Rows& rows, const char* what) {
  if (rows.ndim() != 2 || rows.shape(1) != 3) throw py::value_error(std::string(what) + " must have shape (n, 3)");
  auto a = rows.unchecked<2>();
  std::vector<Vec3> out(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(a(i, 0), a(i, 1), a(i, 2));
  return out;
}

TriangleMesh make_mesh(const Rows& vertices, const Faces& triangles) {
  TriangleMesh m;
  m.vertices = from_array(vertices, "vertices");
  if (triangles.ndim() != 2 || triangles.shape(1) != 3) throw py::value_error("triangles must have shape (m, 3)");
  auto t = triangles.unchecked<2>();
  for (py::ssize_t i = 0; i < t.shape(0); ++i) {
    for (int k = 0; k < 3; ++k) {
      if (t(i, k) < 0 || t(i, k) >= static_cast<int>(m.vertices.size())) throw py::index_error("triangle index out of range");
    }
    m.triangles.push_back({t(i, 0), t(i, 1), t(i, 2)});
  }
  m.normals = vertex_normals(m.vertices, m.triangles);
  return m;
}

py::dict motion_dict(const MotionStatistics& s) {
  py::dict d;
  d["frames"] = s.frames;
  d["mean"] = s.mean;
  d["min"] = s.min;
  d["max"] = s.max;
  d["std"] = s.std;
  return d;
}

py::dict metrics_dict(const FrameMetrics& m) {
  py::dict d;
  d["frame"] = m.frame;
  d["mae_mm"] = m.mae_mm;
  d["std_mm"] = m.std_mm;
  d["hausdorff"] = m.hausdorff;
  d["outliers"] = m.outliers;
  d["n_vertices"] = m.n_vertices;
  return d;
}

PipelineConfig pipeline_config(const std::filesystem::path& sequence, const std::filesystem::path& out,
                               const std::optional<std::filesystem::path>& config, int frames, int iterations,
                               bool puppet_init, bool skeleton_term, bool mediated) {
  PipelineConfig c = config ? load_config(*config) : PipelineConfig{};
  c.sequence_dir = sequence;
  if (!out.empty()) c.output_dir = out;
  if (frames > 0) c.frames = frames;
  if (iterations > 0) c.solver.max_iterations = iterations;
  c.puppet_init = c.puppet_init && puppet_init;
  c.skeleton_term = c.skeleton_term && skeleton_term;
  c.mediated_correspondence = c.mediated_correspondence && mediated;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Puppet-assisted non-rigid tracking and fusion";

  static py::exception<Error> error(m, "PuppetrackError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(e.what());
      py::setattr(exc, "kind", py::str(to_string(e.kind())));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("rotation_between", &rotation_between, py::arg("a"), py::arg("b"));
  m.def("rotation_between_or_flip", &rotation_between_or_flip, py::arg("a"), py::arg("b"));
  m.def("exp_so3", &exp_so3, py::arg("w"));
  m.def("log_so3", &log_so3, py::arg("r"));
  m.def(
      "bone_rigid_transform",
      [](const Vec3& prev_head, const Vec3& prev_tail, const Vec3& curr_head, const Vec3& curr_tail) {
        const RigidTransform t = bone_rigid_transform(prev_head, prev_tail, curr_head, curr_tail);
        return py::make_tuple(t.rotation, t.translation);
      },
      py::arg("prev_head"), py::arg("prev_tail"), py::arg("curr_head"), py::arg("curr_tail"),
      "Rotation and translation taking the previous bone onto the current one.");

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             return Intrinsics{fx, fy, cx, cy, width, height};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height);
  m.def("default_intrinsics", &default_intrinsics);

  py::class_<TriangleMesh>(m, "TriangleMesh")
      .def(py::init(&make_mesh), py::arg("vertices"), py::arg("triangles"))
      .def_property_readonly("vertices", [](const TriangleMesh& t) { return to_array(t.vertices); })
      .def_property_readonly("normals", [](const TriangleMesh& t) { return to_array(t.normals); })
      .def_property_readonly("triangles",
                             [](const TriangleMesh& t) {
                               Faces out({static_cast<py::ssize_t>(t.triangles.size()), py::ssize_t{3}});
                               auto a = out.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < t.triangles.size(); ++i) {
                                 for (int k = 0; k < 3; ++k) a(i, k) = t.triangles[i][k];
                               }
                               return out;
                             })
      .def("__len__", [](const TriangleMesh& t) { return t.vertices.size(); });
  m.def("read_obj", &read_obj, py::arg("path"));
  m.def("write_obj", &write_obj, py::arg("path"), py::arg("mesh"));

  m.def(
      "render_depth",
      [](const TriangleMesh& mesh, const Intrinsics& k) {
        const DepthImage d = render_depth(mesh, k);
        py::array_t<float> out({d.height, d.width});
        std::copy(d.meters.begin(), d.meters.end(), out.mutable_data());
        return out;
      },
      py::arg("mesh"), py::arg("intrinsics"), "Depth in meters, 0 where nothing is hit.");
  m.def(
      "backproject",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> depth, const Intrinsics& k) {
        if (depth.ndim() != 2) throw py::value_error("depth must be a 2-D array");
        DepthImage d(static_cast<int>(depth.shape(1)), static_cast<int>(depth.shape(0)));
        std::copy(depth.data(), depth.data() + depth.size(), d.meters.begin());
        const TargetCloud c = backproject(d, k);
        std::vector<Vec3> points, normals;
        for (std::size_t i = 0; i < c.points.size(); ++i) {
          if (!c.valid[i]) continue;
          points.push_back(c.points[i]);
          normals.push_back(c.normals[i]);
        }
        return py::make_tuple(to_array(points), to_array(normals));
      },
      py::arg("depth"), py::arg("intrinsics"), "Valid points and normals of a depth image (meters).");

  m.def("mae_point_to_plane",
        [](const TriangleMesh& recon, const TriangleMesh& gt) {
          const MaeResult r = mae_point_to_plane(recon, gt);
          return py::make_tuple(r.mean_mm, r.std_mm);
        },
        py::arg("recon"), py::arg("gt"), "Mean and std in millimeters.");
  m.def("hausdorff", &hausdorff, py::arg("a"), py::arg("b"));
  m.def("outlier_count", &outlier_count, py::arg("recon"), py::arg("gt"),
        py::arg("threshold") = kDefaultOutlierThreshold);
  m.def("evaluate_frame",
        [](const TriangleMesh& recon, const TriangleMesh& gt, double threshold) {
          return metrics_dict(evaluate_frame(0, recon, gt, threshold));
        },
        py::arg("recon"), py::arg("gt"), py::arg("threshold") = kDefaultOutlierThreshold);

  m.def("builtin_script_names", &builtin_script_names);
  m.def(
      "generate",
      [](const std::string& script, int frames, const std::filesystem::path& out, double noise,
         std::uint64_t seed, bool color) {
        const SkeletonTopology topology = default_topology();
        const PuppetMesh puppet = generate_procedural_puppet(topology, default_proportions(topology));
        const SequenceManifest manifest =
            emit_sequence(puppet, topology, builtin_script(script, topology, frames), default_intrinsics(), out,
                          {.depth_noise_sigma = noise, .seed = seed, .color = color});
        return motion_dict(manifest.motion);
      },
      py::arg("script"), py::arg("frames"), py::arg("out"), py::arg("noise") = 0.0, py::arg("seed") = 1,
      py::arg("color") = true, "Write a synthetic sequence; returns its motion statistics.");

  m.def(
      "reconstruct",
      [](const std::filesystem::path& sequence, const std::filesystem::path& out,
         const std::optional<std::filesystem::path>& config, int frames, int iterations, bool puppet_init,
         bool skeleton_term, bool mediated) {
        ReconstructionResult r;
        const PipelineConfig c =
            pipeline_config(sequence, out, config, frames, iterations, puppet_init, skeleton_term, mediated);
        {
          py::gil_scoped_release release;
          r = run_reconstruct(c);
        }
        py::dict d;
        d["frames_processed"] = r.frames_processed;
        d["failed"] = r.failed;
        d["failed_frame"] = r.failed_frame;
        d["message"] = r.message;
        d["diagnostics"] = diagnostics_csv(r.diagnostics);
        return d;
      },
      py::arg("sequence"), py::arg("out"), py::arg("config") = py::none(), py::arg("frames") = -1,
      py::arg("iterations") = -1, py::arg("puppet_init") = true, py::arg("skeleton_term") = true,
      py::arg("mediated_correspondence") = true);

  m.def(
      "evaluate",
      [](const std::filesystem::path& recon, const std::filesystem::path& sequence) {
        py::list rows;
        for (const auto& r : run_evaluate(recon, sequence)) rows.append(metrics_dict(r));
        return rows;
      },
      py::arg("recon"), py::arg("sequence"));

  m.def(
      "ablate",
      [](const std::filesystem::path& sequence, const std::optional<std::filesystem::path>& config, int iterations) {
        const PipelineConfig c = pipeline_config(sequence, {}, config, -1, iterations, true, true, true);
        py::list rows;
        for (const auto& r : run_ablation(c)) {
          py::dict d = metrics_dict(r.metrics);
          d["case"] = r.name;
          d["iteration"] = r.iteration;
          rows.append(d);
        }
        return rows;
      },
      py::arg("sequence"), py::arg("config") = py::none(), py::arg("iterations") = -1,
      "Frames 0 -> 1 with and without puppet initialization, one row per iteration.");
}
