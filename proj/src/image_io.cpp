#include "ig3d/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "ig3d/error.hpp"

namespace ig3d {

void write_png(const Tensor& image, const std::filesystem::path& path) {
  if (image.channels != 3) throw ValidationError("write_png expects a 3-channel image, got " + image.shape_string());
  std::vector<unsigned char> pixels(image.plane() * 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }

  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw RuntimeFailure("failed to write " + path.string() + ": " + png.message);
  }
}

Tensor read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DatasetError(DatasetError::Kind::kMissingFile, "image file not found: " + path.string());
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ValidationError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ValidationError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  Tensor out(3, static_cast<int>(png.height), static_cast<int>(png.width));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(c, y, x) = pixels[(static_cast<std::size_t>(y) * out.width + x) * 3 + c] / 255.0;
  return out;
}

void write_raw_f32(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  for (double v : t.data) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

Tensor read_raw_f32(const std::filesystem::path& path, int channels, int height, int width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  Tensor t(channels, height, width);
  for (double& v : t.data) {
    float f;
    if (!is.read(reinterpret_cast<char*>(&f), sizeof f)) throw ValidationError("raw dump too short: " + path.string());
    v = f;
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ValidationError("raw dump too long: " + path.string());
  return t;
}

}  // namespace ig3d
