#include "ig3d/metrics.hpp"

#include <cmath>

#include "ig3d/error.hpp"

namespace ig3d {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.size() == 0) throw ValidationError("psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double silhouette_iou(const std::vector<double>& opacity_a, const std::vector<double>& opacity_b, double threshold) {
  if (opacity_a.size() != opacity_b.size()) {
    throw ShapeMismatchError("silhouette sizes differ: " + std::to_string(opacity_a.size()) + " vs " +
                             std::to_string(opacity_b.size()));
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < opacity_a.size(); ++i) {
    const bool a = opacity_a[i] >= threshold;
    const bool b = opacity_b[i] >= threshold;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::array<double, 3> mean_channel_difference(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "channel difference");
  if (a.channels != 3) throw ShapeMismatchError("channel difference needs RGB images, got " + a.shape_string());
  std::array<double, 3> out{};
  const std::size_t plane = a.plane();
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += b.data[c * plane + p] - a.data[c * plane + p];
    out[c] = s / static_cast<double>(plane);
  }
  return out;
}

std::array<double, 3> masked_channel_mean(const Tensor& image, const std::vector<double>& mask, double threshold) {
  if (image.channels != 3 || mask.size() != image.plane()) {
    throw ShapeMismatchError("mask of " + std::to_string(mask.size()) + " pixels for image " + image.shape_string());
  }
  std::array<double, 3> out{};
  std::size_t n = 0;
  const std::size_t plane = image.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    if (mask[p] < threshold) continue;
    ++n;
    for (int c = 0; c < 3; ++c) out[c] += image.data[c * plane + p];
  }
  if (n > 0) {
    for (double& v : out) v /= static_cast<double>(n);
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_view = nlohmann::json::array();
  for (const ViewMetrics& v : views) {
    per_view.push_back({{"psnr", v.psnr}, {"iou", v.iou}, {"channel_difference", v.channel_difference}});
  }
  return {{"views", per_view},
          {"mean_psnr", mean_psnr},
          {"mean_iou", mean_iou},
          {"mean_channel_difference", mean_channel_difference}};
}

MetricsReport compare_grids(const VoxelGrid& a, const VoxelGrid& b, const std::vector<Camera>& cameras,
                            const RenderParams& params) {
  if (cameras.empty()) throw ValidationError("metrics need at least one camera");
  MetricsReport report;
  for (const Camera& cam : cameras) {
    const RenderOutput ra = render_image(a, cam, params);
    const RenderOutput rb = render_image(b, cam, params);
    ViewMetrics v;
    v.psnr = psnr(ra.rgb, rb.rgb);
    v.iou = silhouette_iou(ra.opacity, rb.opacity);
    v.channel_difference = mean_channel_difference(ra.rgb, rb.rgb);
    report.mean_psnr += v.psnr;
    report.mean_iou += v.iou;
    for (int c = 0; c < 3; ++c) report.mean_channel_difference[c] += v.channel_difference[c];
    report.views.push_back(v);
  }
  const double n = static_cast<double>(cameras.size());
  report.mean_psnr /= n;
  report.mean_iou /= n;
  for (double& c : report.mean_channel_difference) c /= n;
  return report;
}

}  // namespace ig3d
