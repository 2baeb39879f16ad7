#pragma once

#include <filesystem>

#include "ig3d/tensor.hpp"

namespace ig3d {

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded to the nearest level.
void write_png(const Tensor& image, const std::filesystem::path& path);
/// Reads an 8-bit PNG as a 3 x H x W tensor in [0, 1]. Alpha is dropped.
Tensor read_png(const std::filesystem::path& path);

/// Raw little-endian float32 dump of the tensor data in C x H x W order.
void write_raw_f32(const Tensor& t, const std::filesystem::path& path);
Tensor read_raw_f32(const std::filesystem::path& path, int channels, int height, int width);

}  // namespace ig3d
