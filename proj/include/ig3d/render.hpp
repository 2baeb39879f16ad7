#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "ig3d/camera.hpp"
#include "ig3d/grid.hpp"
#include "ig3d/tensor.hpp"

namespace ig3d {

inline constexpr const char* kDensityActivation = "softplus";
inline constexpr const char* kColorActivation = "sigmoid";

double softplus(double x);
double sigmoid(double x);
/// Inverses used when writing target values into raw grids. Arguments are
/// clamped into the open range of the activation.
double inverse_softplus(double y);
double inverse_sigmoid(double y);

struct RenderParams {
  /// Marching step in world units; 0 selects half the smallest cell edge.
  double step_size = 0.0;
  std::array<double, 3> background{1.0, 1.0, 1.0};
  double density_bias = -3.0;
  int max_samples = 1024;
  /// Worker threads. Forward output is independent of this; the backward
  /// pass is bitwise reproducible for a fixed thread count.
  int threads = 1;

  void validate() const;
};

double effective_step(const VoxelGrid& grid, const RenderParams& params);

struct RayResult {
  std::array<double, 3> rgb{};
  double opacity = 0.0;
  double depth = 0.0;
  int samples = 0;
};

/// What render_backward needs to replay a forward pass.
struct RenderTape {
  std::shared_ptr<const VoxelGrid> grid;
  std::vector<Ray> rays;  // clipped
  RenderParams params;
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  Tensor rgb;                   // 3 x H x W
  std::vector<double> opacity;  // H x W
  std::vector<double> depth;    // H x W
  RenderTape tape;
};

/// March one clipped ray with midpoint samples t_near + (i + 0.5) * step,
/// keeping samples whose midpoint lies before t_far.
RayResult render_ray(const VoxelGrid& grid, const Ray& ray, const RenderParams& params);

RenderOutput render_image(const VoxelGrid& grid, const Camera& camera, const RenderParams& params);

/// Render an arbitrary ray batch; the output is laid out as a 1 x N image.
RenderOutput render_rays(const VoxelGrid& grid, std::vector<Ray> rays, const RenderParams& params);

/// Reverse-mode gradient of sum(d_rgb * rgb) with respect to the raw grid
/// values used by the forward pass that produced `output`.
GridGrad render_backward(const RenderOutput& output, const Tensor& d_rgb);

}  // namespace ig3d
