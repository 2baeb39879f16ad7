#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ig3d/checkpoint.hpp"
#include "ig3d/cli.hpp"
#include "ig3d/error.hpp"
#include "ig3d/grid.hpp"
#include "ig3d/instruct.hpp"
#include "ig3d/render.hpp"
#include "ig3d/scenes.hpp"

namespace py = pybind11;
using namespace ig3d;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// 3 x H x W tensor to an H x W x 3 array.
Array image_to_array(const Tensor& t) {
  Array a({t.height, t.width, t.channels});
  auto m = a.mutable_unchecked<3>();
  for (int c = 0; c < t.channels; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) m(y, x, c) = t.at(c, y, x);
  return a;
}

Tensor array_to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("expected an H x W x 3 array");
  auto m = a.unchecked<3>();
  Tensor t(3, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) t.at(c, y, x) = m(y, x, c);
  return t;
}

Camera make_camera(const Array& cam_to_world, int width, int height, double fov_x) {
  if (cam_to_world.ndim() != 2 || cam_to_world.shape(0) != 4 || cam_to_world.shape(1) != 4) {
    throw ValidationError("cam_to_world must be a 4 x 4 array");
  }
  Camera c;
  c.width = width;
  c.height = height;
  c.fov_x = fov_x;
  auto m = cam_to_world.unchecked<2>();
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) c.cam_to_world(r, k) = m(r, k);
  c.validate();
  return c;
}

Array pose_array(const Camera& c) {
  Array a({4, 4});
  auto m = a.mutable_unchecked<2>();
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) m(r, k) = c.cam_to_world(r, k);
  return a;
}

}  // namespace

PYBIND11_MODULE(_ig3d, m) {
  m.doc() = "Voxel radiance fields with instruction-guided conversion";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  py::class_<Resolution>(m, "Resolution")
      .def(py::init<int, int, int>())
      .def_readwrite("nx", &Resolution::nx)
      .def_readwrite("ny", &Resolution::ny)
      .def_readwrite("nz", &Resolution::nz)
      .def("count", &Resolution::count)
      .def("__eq__", [](const Resolution& a, const Resolution& b) { return a == b; })
      .def("__repr__", [](const Resolution& r) { return "Resolution(" + r.to_string() + ")"; });

  py::class_<VoxelGrid>(m, "VoxelGrid")
      .def_property_readonly("resolution", &VoxelGrid::resolution)
      .def_property_readonly("bbox",
                             [](const VoxelGrid& g) {
                               const BBox& b = g.bbox();
                               return py::make_tuple(std::array<double, 3>{b.min.x(), b.min.y(), b.min.z()},
                                                     std::array<double, 3>{b.max.x(), b.max.y(), b.max.z()});
                             })
      .def("density",
           [](const VoxelGrid& g) {
             const Resolution& r = g.resolution();
             Array a({r.nz, r.ny, r.nx});
             std::copy(g.density().begin(), g.density().end(), a.mutable_data());
             return a;
           },
           "Raw density as a (nz, ny, nx) array.")
      .def("color",
           [](const VoxelGrid& g) {
             const Resolution& r = g.resolution();
             Array a({r.nz, r.ny, r.nx, 3});
             std::copy(g.color().begin(), g.color().end(), a.mutable_data());
             return a;
           },
           "Raw colour as a (nz, ny, nx, 3) array.")
      .def("__eq__", [](const VoxelGrid& a, const VoxelGrid& b) { return a == b; });

  m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });
  m.def("save_checkpoint", [](const VoxelGrid& g, const std::string& path) { save_checkpoint(g, path); });
  m.def("resample", &resample);

  m.def(
      "load_scene",
      [](const std::string& path, int resolution) {
        return rasterize_scene(load_scene_spec(path), {resolution, resolution, resolution}, {});
      },
      py::arg("path"), py::arg("resolution") = 32);

  m.def(
      "render",
      [](const VoxelGrid& g, const Array& cam_to_world, int width, int height, double fov_x,
         std::array<double, 3> background) {
        RenderParams p;
        p.background = background;
        const RenderOutput out = render_image(g, make_camera(cam_to_world, width, height, fov_x), p);
        Array opacity({out.height, out.width});
        std::copy(out.opacity.begin(), out.opacity.end(), opacity.mutable_data());
        return py::make_tuple(image_to_array(out.rgb), opacity);
      },
      py::arg("grid"), py::arg("cam_to_world"), py::arg("width") = 64, py::arg("height") = 64,
      py::arg("fov_x") = 0.7, py::arg("background") = std::array<double, 3>{1.0, 1.0, 1.0},
      "Render a view; returns (rgb H x W x 3, opacity H x W).");

  m.def(
      "orbit_poses",
      [](int n, double radius, double elevation) {
        CameraDistribution d;
        d.radius_min = d.radius_max = radius;
        d.elevation_min = d.elevation_max = elevation;
        std::vector<Array> poses;
        for (const Camera& c : orbit_cameras(d, n)) poses.push_back(pose_array(c));
        return poses;
      },
      py::arg("n"), py::arg("radius") = 2.0, py::arg("elevation") = 0.3);

  m.def("parse_instruction", [](const std::string& text) { return to_string(parse_instruction(text)); });
  m.def("apply_instruction", [](const std::string& text, const Array& image) {
    return image_to_array(apply_edit(parse_instruction(text), array_to_image(image)));
  });

  m.def(
      "dynamic_schedule",
      [](std::int64_t base_count, int l, int iterations, int interval) {
        std::vector<std::pair<int, std::int64_t>> events;
        for (const ScalingEvent& e : dynamic_schedule(base_count, l, iterations, interval).events) {
          events.emplace_back(e.iteration, e.count());
        }
        return events;
      },
      "List of (iteration, voxel count) scaling events.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Run the command-line tool in process; returns (exit code, stdout, stderr).");
}
