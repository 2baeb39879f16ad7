#include "ig3d/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <sstream>

#include "ig3d/error.hpp"
#include "ig3d/image_io.hpp"
#include "ig3d/sds.hpp"

namespace ig3d {

namespace {

using nlohmann::json;

// Raw values are kept finite. The density bound leaves room for sigma ~ 30
// after the activation bias; colours saturate well before +-10.
constexpr double kColorRawClip = 10.0;
constexpr double kDensityRawMin = -10.0;
constexpr double kDensityRawMax = 35.0;

struct Reader {
  const std::string& where;

  [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(where + ": " + msg); }

  const json& field(const json& obj, const char* key) const {
    if (!obj.is_object() || !obj.contains(key)) fail(std::string("missing field '") + key + "'");
    return obj.at(key);
  }
  double number(const json& j, const char* what) const {
    if (!j.is_number()) fail(std::string(what) + " must be a number");
    return j.get<double>();
  }
  Vec3 vec3(const json& j, const char* what) const {
    if (!j.is_array() || j.size() != 3) fail(std::string(what) + " must be an array of 3 numbers");
    return {number(j[0], what), number(j[1], what), number(j[2], what)};
  }
  std::array<double, 3> rgb(const json& j, const char* what) const {
    const Vec3 v = vec3(j, what);
    return {v.x(), v.y(), v.z()};
  }
};

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void check_color(const std::array<double, 3>& c, const std::string& what) {
  for (double v : c) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(what + " color components must lie in [0, 1]");
  }
}

double clip_color_raw(double v) { return std::clamp(v, -kColorRawClip, kColorRawClip); }

json mat_to_json(const Mat4& m) {
  json arr = json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) arr.push_back(m(r, c));
  }
  return arr;
}

}  // namespace

double signed_distance(const Primitive& prim, const Vec3& p) {
  return std::visit(
      [&p](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SpherePrimitive>) {
          return (p - v.center).norm() - v.radius;
        } else {
          const Vec3 c = 0.5 * (v.min + v.max);
          const Vec3 h = 0.5 * (v.max - v.min);
          const Vec3 q = (p - c).cwiseAbs() - h;
          return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        }
      },
      prim);
}

void SceneSpec::validate() const {
  bbox.validate();
  check_color(background, "background");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const std::string name = "primitive " + std::to_string(i);
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          check_color(v.color, name);
          if (!(v.density >= 0.0) || !std::isfinite(v.density)) throw ValidationError(name + " density must be >= 0");
          if constexpr (std::is_same_v<T, SpherePrimitive>) {
            if (!(v.radius > 0.0)) throw ValidationError(name + " radius must be positive");
            if (!bbox.contains(v.center - Vec3::Constant(v.radius)) ||
                !bbox.contains(v.center + Vec3::Constant(v.radius))) {
              throw ValidationError(name + " (sphere) extends outside the bounding box");
            }
          } else {
            if (!(v.max.array() > v.min.array()).all()) throw ValidationError(name + " box max must exceed min");
            if (!bbox.contains(v.min) || !bbox.contains(v.max)) {
              throw ValidationError(name + " (box) extends outside the bounding box");
            }
          }
        },
        primitives[i]);
  }
}

SceneSpec parse_scene_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("scene spec line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  SceneSpec spec;
  const std::string top = "scene spec";
  const Reader r{top};
  if (!j.is_object()) r.fail("top level must be an object");
  if (j.contains("bbox")) {
    const json& b = j["bbox"];
    spec.bbox = BBox{r.vec3(r.field(b, "min"), "bbox.min"), r.vec3(r.field(b, "max"), "bbox.max")};
  }
  if (j.contains("background")) spec.background = r.rgb(j["background"], "background");
  if (j.contains("primitives")) {
    const json& prims = j["primitives"];
    if (!prims.is_array()) r.fail("primitives must be an array");
    for (std::size_t i = 0; i < prims.size(); ++i) {
      const std::string where = "scene spec primitive " + std::to_string(i);
      const Reader pr{where};
      const json& p = prims[i];
      const json& type = pr.field(p, "type");
      if (type == "sphere") {
        SpherePrimitive s;
        s.center = pr.vec3(pr.field(p, "center"), "center");
        s.radius = pr.number(pr.field(p, "radius"), "radius");
        if (p.contains("color")) s.color = pr.rgb(p["color"], "color");
        if (p.contains("density")) s.density = pr.number(p["density"], "density");
        spec.primitives.emplace_back(s);
      } else if (type == "box") {
        BoxPrimitive b;
        b.min = pr.vec3(pr.field(p, "min"), "min");
        b.max = pr.vec3(pr.field(p, "max"), "max");
        if (p.contains("color")) b.color = pr.rgb(p["color"], "color");
        if (p.contains("density")) b.density = pr.number(p["density"], "density");
        spec.primitives.emplace_back(b);
      } else {
        pr.fail("unknown primitive type " + type.dump() + " (expected \"sphere\" or \"box\")");
      }
    }
  }
  spec.validate();
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetError::Kind::kMissingFile, "cannot open scene spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene_spec(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

VoxelGrid rasterize_scene(const SceneSpec& spec, Resolution res, const RenderParams& params) {
  spec.validate();
  VoxelGrid grid(res, spec.bbox);
  const Vec3 quarter = 0.25 * grid.cell_size();
  auto density = grid.density();
  auto color = grid.color();
  for (int k = 0; k < res.nz; ++k) {
    for (int j = 0; j < res.ny; ++j) {
      for (int i = 0; i < res.nx; ++i) {
        const Vec3 v = grid.vertex_position(i, j, k);
        double sigma = 0.0;
        std::array<double, 3> rgb{0.0, 0.0, 0.0};
        int occupied = 0;
        for (int s = 0; s < 8; ++s) {
          const Vec3 offset((s & 1 ? 1 : -1) * quarter.x(), (s & 2 ? 1 : -1) * quarter.y(),
                            (s & 4 ? 1 : -1) * quarter.z());
          const Primitive* hit = nullptr;
          for (const Primitive& prim : spec.primitives) {
            if (signed_distance(prim, v + offset) <= 0.0) hit = &prim;
          }
          if (!hit) continue;
          ++occupied;
          std::visit(
              [&](const auto& p) {
                sigma += p.density;
                for (int c = 0; c < 3; ++c) rgb[c] += p.color[c];
              },
              *hit);
        }
        if (occupied > 0) {
          for (double& c : rgb) c /= occupied;
        } else if (!spec.primitives.empty()) {
          // Empty vertices take the colour of the closest surface so that
          // interpolation at the boundary does not blend in an arbitrary colour.
          const Primitive* nearest = &spec.primitives.front();
          double best = signed_distance(*nearest, v);
          for (const Primitive& prim : spec.primitives) {
            const double d = signed_distance(prim, v);
            if (d < best) {
              best = d;
              nearest = &prim;
            }
          }
          std::visit([&](const auto& p) { rgb = p.color; }, *nearest);
        } else {
          rgb = {0.5, 0.5, 0.5};
        }
        const std::size_t idx = grid.index(i, j, k);
        density[idx] = std::clamp(inverse_softplus(sigma / 8.0) - params.density_bias, kDensityRawMin, kDensityRawMax);
        for (int c = 0; c < 3; ++c) color[3 * idx + c] = clip_color_raw(inverse_sigmoid(rgb[c]));
      }
    }
  }
  return grid;
}

void PosedImageSet::validate() const {
  if (views.empty()) throw ValidationError("posed image set is empty");
  check_color(background, "background");
  const Tensor& first = views.front().image;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const PosedImage& v = views[i];
    v.camera.validate();
    if (v.image.channels != 3) throw ShapeMismatchError("view " + std::to_string(i) + " is not an RGB image");
    if (!v.image.same_shape(first)) {
      throw ShapeMismatchError("view " + std::to_string(i) + " has shape " + v.image.shape_string() + ", expected " +
                               first.shape_string());
    }
    if (v.camera.width != v.image.width || v.camera.height != v.image.height) {
      throw ShapeMismatchError("view " + std::to_string(i) + " camera size does not match its image");
    }
    if (v.camera.fov_x != views.front().camera.fov_x) {
      throw ValidationError("view " + std::to_string(i) + " does not share the field of view of view 0");
    }
  }
}

PosedImageSet render_views(const VoxelGrid& grid, const std::vector<Camera>& cameras, const RenderParams& params) {
  PosedImageSet set;
  set.background = params.background;
  for (const Camera& cam : cameras) {
    RenderOutput out = render_image(grid, cam, params);
    set.views.push_back({std::move(out.rgb), cam});
  }
  return set;
}

SynthResult synth_scene(const SceneSpec& spec, Resolution res, int n_views, const CameraDistribution& cameras,
                        std::uint64_t seed, RenderParams params) {
  if (n_views <= 0) throw ValidationError("number of views must be positive");
  cameras.validate();
  params.background = spec.background;
  SynthResult out;
  out.grid = rasterize_scene(spec, res, params);
  std::mt19937_64 rng(seed);
  std::vector<Camera> poses;
  for (int i = 0; i < n_views; ++i) poses.push_back(random_camera_pose(cameras, rng));
  out.images = render_views(out.grid, poses, params);
  out.images.bbox = spec.bbox;
  return out;
}

void save_posed_dataset(const PosedImageSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::filesystem::create_directories(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < set.views.size(); ++i) {
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << i << ".png";
    write_png(set.views[i].image, dir / name.str());
    frames.push_back({{"file", name.str()}, {"transform", mat_to_json(set.views[i].camera.cam_to_world)}});
  }
  json manifest = {{"fov_x", set.views.front().camera.fov_x}, {"background", set.background}};
  if (set.bbox) {
    manifest["bbox"] = {{"min", {set.bbox->min.x(), set.bbox->min.y(), set.bbox->min.z()}},
                        {"max", {set.bbox->max.x(), set.bbox->max.y(), set.bbox->max.z()}}};
  }
  manifest["frames"] = frames;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw RuntimeFailure("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

PosedImageSet load_posed_dataset(const std::filesystem::path& dir) {
  using Kind = DatasetError::Kind;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError(Kind::kMissingFile, "missing dataset manifest " + manifest_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError(Kind::kMalformedManifest, manifest_path.string() + ": " + e.what());
  }
  auto malformed = [&](const std::string& msg) {
    return DatasetError(Kind::kMalformedManifest, manifest_path.string() + ": " + msg);
  };
  if (!j.is_object() || !j.contains("fov_x") || !j["fov_x"].is_number()) throw malformed("fov_x must be a number");
  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
    throw malformed("frames must be a non-empty array");
  }
  PosedImageSet set;
  if (j.contains("background")) {
    const json& bg = j["background"];
    if (!bg.is_array() || bg.size() != 3) throw malformed("background must be [r, g, b]");
    for (int c = 0; c < 3; ++c) {
      if (!bg[c].is_number()) throw malformed("background must be [r, g, b]");
      set.background[c] = bg[c].get<double>();
    }
  }
  if (j.contains("bbox")) {
    try {
      const std::string where = manifest_path.string();
      const Reader r{where};
      set.bbox = BBox{r.vec3(r.field(j["bbox"], "min"), "bbox.min"), r.vec3(r.field(j["bbox"], "max"), "bbox.max")};
      set.bbox->validate();
    } catch (const ValidationError& e) {
      throw DatasetError(Kind::kMalformedManifest, e.what());
    }
  }
  const double fov_x = j["fov_x"].get<double>();
  for (std::size_t i = 0; i < j["frames"].size(); ++i) {
    const json& f = j["frames"][i];
    const std::string where = "frame " + std::to_string(i);
    if (!f.is_object() || !f.contains("file") || !f["file"].is_string()) throw malformed(where + " lacks a file");
    const json& tf = f.value("transform", json());
    if (!tf.is_array() || tf.size() != 16) throw malformed(where + " transform must have 16 numbers");
    Mat4 m;
    for (int k = 0; k < 16; ++k) {
      if (!tf[k].is_number()) throw malformed(where + " transform must have 16 numbers");
      m(k / 4, k % 4) = tf[k].get<double>();
    }
    try {
      validate_rigid(m);
    } catch (const DatasetError& e) {
      throw DatasetError(Kind::kInvalidPose, manifest_path.string() + " " + where + ": " + e.what());
    }
    PosedImage view;
    view.image = read_png(dir / f["file"].get<std::string>());
    view.camera.width = view.image.width;
    view.camera.height = view.image.height;
    view.camera.fov_x = fov_x;
    view.camera.cam_to_world = m;
    set.views.push_back(std::move(view));
  }
  set.validate();
  return set;
}

void FitConfig::validate() const {
  if (iterations < 0) throw ValidationError("fit iterations must be >= 0");
  if (batch_rays <= 0) throw ValidationError("batch_rays must be positive");
  if (!(lr_density > 0.0 && lr_color > 0.0)) throw ValidationError("learning rates must be positive");
  if (resolution.nx < 2 || resolution.ny < 2 || resolution.nz < 2) {
    throw ValidationError("resolution below minimum: " + resolution.to_string() + " (need >= 2 per axis)");
  }
  bbox.validate();
  if (interval <= 0) throw ValidationError("scaling interval must be positive");
  render.validate();
}

VoxelGrid fit(const PosedImageSet& images, const FitConfig& config,
              const std::function<void(const FitProgress&)>& on_iteration) {
  config.validate();
  images.validate();
  if (images.views.size() < 2) throw ValidationError("fitting needs at least 2 views");

  std::optional<ScalingSchedule> schedule;
  Resolution start = config.resolution;
  if (config.start_divisor != 1 && config.iterations > 0) {
    schedule = progressive_schedule(config.resolution, config.start_divisor, config.iterations, config.interval);
    start = schedule->events.front().resolution;
  }
  VoxelGrid grid = create_grid(start, config.bbox, 0.0, {0.0, 0.0, 0.0});
  if (config.iterations == 0) return grid;

  RenderParams params = config.render;
  params.background = images.background;

  std::vector<Ray> rays;
  std::vector<std::array<double, 3>> colors;
  for (const PosedImage& view : images.views) {
    std::vector<Ray> cam_rays = rays_for_camera(view.camera);
    const std::size_t plane = view.image.plane();
    for (std::size_t p = 0; p < plane; ++p) {
      clip_to_box(cam_rays[p], config.bbox);
      rays.push_back(cam_rays[p]);
      colors.push_back({view.image.data[p], view.image.data[plane + p], view.image.data[2 * plane + p]});
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, rays.size() - 1);
  GridAdam adam;
  const int batch = config.batch_rays;
  std::vector<Ray> batch_rays(batch);
  std::vector<std::size_t> chosen(batch);

  for (int it = 0; it < config.iterations; ++it) {
    bool resampled = false;
    if (schedule) {
      if (const ScalingEvent* ev = schedule->event_at(it); ev && !(ev->resolution == grid.resolution())) {
        grid = resample(grid, ev->resolution);
        adam.reset();
        resampled = true;
      }
    }
    for (int b = 0; b < batch; ++b) {
      chosen[b] = pick(rng);
      batch_rays[b] = rays[chosen[b]];
    }
    const RenderOutput out = render_rays(grid, batch_rays, params);
    Tensor d_rgb(3, 1, batch);
    double loss = 0.0;
    const double scale = 2.0 / (3.0 * batch);
    for (int c = 0; c < 3; ++c) {
      for (int b = 0; b < batch; ++b) {
        const double diff = out.rgb.data[c * batch + b] - colors[chosen[b]][c];
        loss += diff * diff;
        d_rgb.data[c * batch + b] = scale * diff;
      }
    }
    loss /= 3.0 * batch;
    if (!std::isfinite(loss)) throw RuntimeFailure("fit diverged at iteration " + std::to_string(it));
    adam.step(grid, render_backward(out, d_rgb), config.lr_density, config.lr_color);
    if (on_iteration) on_iteration({it, loss, resampled, &grid});
  }
  // A short run may end before the schedule reaches the requested size.
  if (!(grid.resolution() == config.resolution)) grid = resample(grid, config.resolution);
  return grid;
}

}  // namespace ig3d
