#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ig3d/camera.hpp"
#include "ig3d/grid.hpp"
#include "ig3d/render.hpp"
#include "ig3d/tensor.hpp"

namespace ig3d {

struct SpherePrimitive {
  Vec3 center = Vec3::Zero();
  double radius = 0.25;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double density = 20.0;  // activated sigma
};

struct BoxPrimitive {
  Vec3 min = Vec3::Constant(-0.25);
  Vec3 max = Vec3::Constant(0.25);
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double density = 20.0;
};

using Primitive = std::variant<SpherePrimitive, BoxPrimitive>;

/// Signed distance to the primitive surface (negative inside; exact for
/// spheres, the usual box SDF otherwise).
double signed_distance(const Primitive& prim, const Vec3& p);

struct SceneSpec {
  BBox bbox{Vec3::Constant(-0.5), Vec3::Constant(0.5)};
  std::array<double, 3> background{1.0, 1.0, 1.0};
  /// Later primitives paint over earlier ones where they overlap.
  std::vector<Primitive> primitives;

  void validate() const;
};

/// JSON scene description:
///   {"bbox": {"min": [x,y,z], "max": [x,y,z]}, "background": [r,g,b],
///    "primitives": [{"type": "sphere", "center": [...], "radius": r,
///                    "color": [r,g,b], "density": d},
///                   {"type": "box", "min": [...], "max": [...], ...}]}
/// Errors carry the line number of the offending input where known.
SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::filesystem::path& path);

/// Raw grid whose activated values reproduce the scene. Each vertex averages
/// 2x2x2 sub-samples at +-h/4. Raw colour is clipped to +-10 and raw density
/// to [-10, 35], so densities up to about 30 are reproduced.
VoxelGrid rasterize_scene(const SceneSpec& spec, Resolution res, const RenderParams& params);

struct PosedImage {
  Tensor image;  // 3 x H x W in [0, 1]
  Camera camera;
};

struct PosedImageSet {
  std::vector<PosedImage> views;
  std::array<double, 3> background{1.0, 1.0, 1.0};
  /// Scene bounds, when the producer of the images knows them.
  std::optional<BBox> bbox;

  /// Non-empty, equal image sizes, shared fov, images match their cameras.
  void validate() const;
};

struct SynthResult {
  VoxelGrid grid;
  PosedImageSet images;
};

/// Rasterize the scene and render `n_views` views at poses drawn from
/// `cameras` with a generator seeded by `seed`.
SynthResult synth_scene(const SceneSpec& spec, Resolution res, int n_views, const CameraDistribution& cameras,
                        std::uint64_t seed, RenderParams params = {});

/// Render one view per camera.
PosedImageSet render_views(const VoxelGrid& grid, const std::vector<Camera>& cameras, const RenderParams& params);

/// Writes manifest.json ({fov_x, background, bbox?, frames: [{file, transform}]},
/// transform is the 4x4 cam-to-world matrix row-major) and one PNG per view.
void save_posed_dataset(const PosedImageSet& set, const std::filesystem::path& dir);
PosedImageSet load_posed_dataset(const std::filesystem::path& dir);

struct FitConfig {
  int iterations = 800;
  int batch_rays = 2048;
  double lr_density = 0.1;
  double lr_color = 0.05;
  Resolution resolution{32, 32, 32};
  BBox bbox{Vec3::Constant(-0.5), Vec3::Constant(0.5)};
  /// Progressive schedule: start at 1/start_divisor of the final voxel count
  /// and double every `interval` iterations. A divisor of 1 disables it.
  int start_divisor = 8;
  int interval = 100;
  RenderParams render;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitProgress {
  int iteration = 0;
  double loss = 0.0;  // batch MSE before the update
  bool resampled = false;
  const VoxelGrid* grid = nullptr;
};

/// Photometric fit of a grid to the posed images with Adam on random ray
/// batches. The render background is taken from the image set.
VoxelGrid fit(const PosedImageSet& images, const FitConfig& config,
              const std::function<void(const FitProgress&)>& on_iteration = {});

}  // namespace ig3d
