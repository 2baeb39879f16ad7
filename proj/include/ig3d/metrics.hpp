#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "ig3d/camera.hpp"
#include "ig3d/grid.hpp"
#include "ig3d/render.hpp"
#include "ig3d/tensor.hpp"

namespace ig3d {

inline constexpr double kPsnrCap = 99.0;

/// PSNR in dB for images in [0, 1]; identical images report kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);

/// Intersection over union of the opacity masks thresholded at `threshold`.
/// Two empty masks count as a perfect match.
double silhouette_iou(const std::vector<double>& opacity_a, const std::vector<double>& opacity_b,
                      double threshold = 0.5);

/// Per-channel mean of (b - a) over all pixels.
std::array<double, 3> mean_channel_difference(const Tensor& a, const Tensor& b);

/// Per-channel mean over pixels where mask[p] >= threshold; zeros if none.
std::array<double, 3> masked_channel_mean(const Tensor& image, const std::vector<double>& mask,
                                          double threshold = 0.5);

struct ViewMetrics {
  double psnr = 0.0;
  double iou = 0.0;
  std::array<double, 3> channel_difference{};
};

struct MetricsReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0.0;
  double mean_iou = 0.0;
  std::array<double, 3> mean_channel_difference{};

  nlohmann::json to_json() const;
};

/// Render both grids from every camera and compare (b relative to a).
MetricsReport compare_grids(const VoxelGrid& a, const VoxelGrid& b, const std::vector<Camera>& cameras,
                            const RenderParams& params);

}  // namespace ig3d
