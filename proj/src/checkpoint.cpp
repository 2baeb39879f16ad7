#include "ig3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "ig3d/error.hpp"
#include "ig3d/render.hpp"

namespace ig3d {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  char b[4];
  std::memcpy(b, &f, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw ValidationError(std::string("truncated checkpoint while reading ") + what);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what), 4);
    return v;
  }
  double f32(const char* what) {
    float f;
    std::memcpy(&f, take(4, what), 4);
    return f;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const VoxelGrid& grid) {
  const auto& r = grid.resolution();
  const auto& b = grid.bbox();
  nlohmann::json header = {
      {"resolution", {r.nx, r.ny, r.nz}},
      {"bbox", {{"min", {b.min.x(), b.min.y(), b.min.z()}}, {"max", {b.max.x(), b.max.y(), b.max.z()}}}},
      {"activations", {{"density", kDensityActivation}, {"color", kColorActivation}}},
      {"layout", "x-fastest"},
      {"color_layout", "interleaved-rgb"},
      {"dtype", "float32-le"},
  };
  const std::string text = header.dump();

  std::string out;
  out.reserve(9 + text.size() + grid.vertex_count() * 16);
  out.append(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (double v : grid.density()) put_f32(out, v);
  for (double v : grid.color()) put_f32(out, v);
  return out;
}

VoxelGrid checkpoint_from_bytes(const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4, "magic"), kCheckpointMagic, 4) != 0) {
    throw ValidationError("not an IG3D checkpoint (bad magic bytes)");
  }
  const auto version = static_cast<unsigned char>(*in.take(1, "version"));
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = in.u32("header length");
  const char* text = in.take(len, "header");

  nlohmann::json header;
  Resolution res;
  BBox box;
  try {
    header = nlohmann::json::parse(text, text + len);
    const auto& r = header.at("resolution");
    res = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()};
    for (int a = 0; a < 3; ++a) {
      box.min[a] = header.at("bbox").at("min").at(a).get<double>();
      box.max[a] = header.at("bbox").at("max").at(a).get<double>();
    }
    if (header.at("activations").at("density") != kDensityActivation ||
        header.at("activations").at("color") != kColorActivation) {
      throw ValidationError("checkpoint uses unsupported activations " + header.at("activations").dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
  }

  VoxelGrid grid(res, box);
  for (double& v : grid.density()) v = in.f32("density values");
  for (double& v : grid.color()) v = in.f32("color values");
  if (!in.done()) throw ValidationError("trailing bytes after checkpoint payload");
  return grid;
}

void save_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  const std::string bytes = checkpoint_bytes(grid);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

VoxelGrid load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

VoxelGrid quantize_to_f32(const VoxelGrid& grid) {
  VoxelGrid out = grid;
  for (double& v : out.density()) v = static_cast<float>(v);
  for (double& v : out.color()) v = static_cast<float>(v);
  return out;
}

}  // namespace ig3d
