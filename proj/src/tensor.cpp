#include "ig3d/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ig3d/error.hpp"

namespace ig3d {

Tensor::Tensor(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
  if (c <= 0 || h <= 0 || w <= 0) {
    throw ValidationError("tensor dimensions must be positive, got " + std::to_string(c) + "x" +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  data.assign(static_cast<std::size_t>(c) * h * w, fill);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatchError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
  }
}

void require_finite(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw ValidationError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor resize_to(const Tensor& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Tensor out(src.channels, height, width);
  if (src.height % height == 0 && src.width % width == 0) {
    const int ky = src.height / height;
    const int kx = src.width / width;
    const double inv = 1.0 / (ky * kx);
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < ky; ++dy)
            for (int dx = 0; dx < kx; ++dx) acc += src.at(c, y * ky + dy, x * kx + dx);
          out.at(c, y, x) = acc * inv;
        }
    return out;
  }
  if (height % src.height == 0 && width % src.width == 0) {
    const int ky = height / src.height;
    const int kx = width / src.width;
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(c, y, x) = src.at(c, y / ky, x / kx);
    return out;
  }
  throw ShapeMismatchError("cannot resize " + src.shape_string() + " to " + std::to_string(height) + "x" +
                           std::to_string(width) + ": non-integer scale factor");
}

}  // namespace ig3d
