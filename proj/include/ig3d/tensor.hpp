#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ig3d {

/// Dense C×H×W tensor of doubles, row-major with channel planes outermost.
/// Images are tensors with three channels and values in [0, 1].
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  bool same_shape(const Tensor& other) const noexcept {
    return channels == other.channels && height == other.height && width == other.width;
  }
  std::string shape_string() const;
};

/// Throws ShapeMismatchError naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Throws ValidationError if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

/// Resize a tensor spatially: integer-factor area averaging when shrinking,
/// nearest-neighbour replication when growing. Channels must match.
Tensor resize_to(const Tensor& src, int height, int width);

}  // namespace ig3d
