#include "ig3d/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "ig3d/error.hpp"

namespace ig3d {

namespace {

constexpr std::int64_t kMinScheduleCount = 64;

void validate_resolution(const Resolution& res) {
  if (res.nx < 2 || res.ny < 2 || res.nz < 2) {
    throw ValidationError("resolution below minimum: " + res.to_string() + " (need >= 2 per axis)");
  }
}

int scaled_axis(double axis, double factor) { return std::max(2, static_cast<int>(std::lround(axis * factor))); }

Resolution scaled_resolution(const Resolution& base, double per_axis_factor) {
  return {scaled_axis(base.nx, per_axis_factor), scaled_axis(base.ny, per_axis_factor),
          scaled_axis(base.nz, per_axis_factor)};
}

void require_min_count(const ScalingSchedule& s) {
  if (s.min_count() < kMinScheduleCount) {
    throw ValidationError("schedule drops to " + std::to_string(s.min_count()) + " voxels; minimum is " +
                          std::to_string(kMinScheduleCount));
  }
}

}  // namespace

std::string Resolution::to_string() const {
  std::ostringstream os;
  os << "(" << nx << "," << ny << "," << nz << ")";
  return os.str();
}

bool BBox::contains(const Vec3& p, double tol) const {
  for (int a = 0; a < 3; ++a) {
    const double slack = tol * (max[a] - min[a]);
    if (!(p[a] >= min[a] - slack && p[a] <= max[a] + slack)) return false;
  }
  return true;
}

void BBox::validate() const {
  if (!min.allFinite() || !max.allFinite()) throw ValidationError("bounding box must be finite");
  for (int a = 0; a < 3; ++a) {
    if (!(max[a] > min[a])) {
      throw ValidationError("degenerate bounding box: max must exceed min on axis " + std::to_string(a));
    }
  }
}

VoxelGrid::VoxelGrid(Resolution res, BBox bbox) : res_(res), bbox_(std::move(bbox)) {
  validate_resolution(res_);
  bbox_.validate();
  density_.assign(static_cast<std::size_t>(res_.count()), 0.0);
  color_.assign(static_cast<std::size_t>(res_.count()) * 3, 0.0);
}

std::array<int, 3> VoxelGrid::coords(std::size_t index) const noexcept {
  const auto nx = static_cast<std::size_t>(res_.nx);
  const auto ny = static_cast<std::size_t>(res_.ny);
  return {static_cast<int>(index % nx), static_cast<int>((index / nx) % ny), static_cast<int>(index / (nx * ny))};
}

Vec3 VoxelGrid::cell_size() const {
  const Vec3 e = bbox_.extent();
  return {e.x() / (res_.nx - 1), e.y() / (res_.ny - 1), e.z() / (res_.nz - 1)};
}

Vec3 VoxelGrid::vertex_position(int i, int j, int k) const {
  // Pin the last vertex to bbox.max exactly.
  auto coord = [](double lo, double hi, int idx, int n) {
    if (idx == n - 1) return hi;
    return lo + (hi - lo) * (static_cast<double>(idx) / (n - 1));
  };
  return {coord(bbox_.min.x(), bbox_.max.x(), i, res_.nx), coord(bbox_.min.y(), bbox_.max.y(), j, res_.ny),
          coord(bbox_.min.z(), bbox_.max.z(), k, res_.nz)};
}

std::optional<std::size_t> VoxelGrid::find_non_finite() const {
  for (std::size_t v = 0; v < density_.size(); ++v) {
    if (!std::isfinite(density_[v]) || !std::isfinite(color_[3 * v]) || !std::isfinite(color_[3 * v + 1]) ||
        !std::isfinite(color_[3 * v + 2])) {
      return v;
    }
  }
  return std::nullopt;
}

GridGrad::GridGrad(Resolution res) : resolution(res) {
  density.assign(static_cast<std::size_t>(res.count()), 0.0);
  color.assign(static_cast<std::size_t>(res.count()) * 3, 0.0);
}

void GridGrad::zero() {
  std::fill(density.begin(), density.end(), 0.0);
  std::fill(color.begin(), color.end(), 0.0);
}

GridGrad& GridGrad::operator+=(const GridGrad& other) {
  if (!(resolution == other.resolution)) {
    throw ShapeMismatchError("gradient buffers differ: " + resolution.to_string() + " vs " +
                             other.resolution.to_string());
  }
  for (std::size_t i = 0; i < density.size(); ++i) density[i] += other.density[i];
  for (std::size_t i = 0; i < color.size(); ++i) color[i] += other.color[i];
  return *this;
}

bool GridGrad::is_zero() const {
  return std::all_of(density.begin(), density.end(), [](double v) { return v == 0.0; }) &&
         std::all_of(color.begin(), color.end(), [](double v) { return v == 0.0; });
}

VoxelGrid create_grid(Resolution res, const BBox& bbox, double density_init, const std::array<double, 3>& color_init) {
  if (!std::isfinite(density_init) || !std::isfinite(color_init[0]) || !std::isfinite(color_init[1]) ||
      !std::isfinite(color_init[2])) {
    throw ValidationError("grid initial values must be finite");
  }
  VoxelGrid grid(res, bbox);
  std::ranges::fill(grid.density(), density_init);
  auto color = grid.color();
  for (std::size_t v = 0; v < grid.vertex_count(); ++v) {
    color[3 * v] = color_init[0];
    color[3 * v + 1] = color_init[1];
    color[3 * v + 2] = color_init[2];
  }
  return grid;
}

GridSample sample_trilinear(const VoxelGrid& grid, const Vec3& p) {
  const BBox& box = grid.bbox();
  if (!box.contains(p, 1e-9)) {
    std::ostringstream os;
    os << "sample point (" << p.x() << ", " << p.y() << ", " << p.z() << ") outside grid bounds";
    throw OutOfBoundsError(os.str());
  }
  const Resolution& res = grid.resolution();
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const int n = res[a];
    double u = (p[a] - box.min[a]) / (box.max[a] - box.min[a]) * (n - 1);
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    const int i0 = std::min(static_cast<int>(std::floor(u)), n - 2);
    base[a] = i0;
    frac[a] = u - i0;
  }

  GridSample s;
  s.footprint.vertex_count = grid.vertex_count();
  auto density = grid.density();
  auto color = grid.color();
  int corner = 0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      for (int dx = 0; dx < 2; ++dx, ++corner) {
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        const double w = wx * wy * wz;
        const std::size_t v = grid.index(base[0] + dx, base[1] + dy, base[2] + dz);
        s.footprint.index[corner] = v;
        s.footprint.weight[corner] = w;
        s.density += w * density[v];
        s.color[0] += w * color[3 * v];
        s.color[1] += w * color[3 * v + 1];
        s.color[2] += w * color[3 * v + 2];
      }
    }
  }
  return s;
}

void accumulate_sample_grad(GridGrad& grad, const Footprint& fp, double d_density, const std::array<double, 3>& d_color) {
  if (fp.vertex_count != grad.density.size()) {
    throw ShapeMismatchError("footprint from a grid with " + std::to_string(fp.vertex_count) +
                             " vertices applied to a gradient buffer with " + std::to_string(grad.density.size()));
  }
  for (int c = 0; c < 8; ++c) {
    const double w = fp.weight[c];
    const std::size_t v = fp.index[c];
    grad.density[v] += w * d_density;
    grad.color[3 * v] += w * d_color[0];
    grad.color[3 * v + 1] += w * d_color[1];
    grad.color[3 * v + 2] += w * d_color[2];
  }
}

VoxelGrid resample(const VoxelGrid& grid, Resolution new_res) {
  validate_resolution(new_res);
  VoxelGrid out(new_res, grid.bbox());
  auto density = out.density();
  auto color = out.color();
  const BBox& box = grid.bbox();
  for (int k = 0; k < new_res.nz; ++k)
    for (int j = 0; j < new_res.ny; ++j)
      for (int i = 0; i < new_res.nx; ++i) {
        Vec3 p = out.vertex_position(i, j, k);
        p = p.cwiseMax(box.min).cwiseMin(box.max);
        const GridSample s = sample_trilinear(grid, p);
        const std::size_t v = out.index(i, j, k);
        density[v] = s.density;
        color[3 * v] = s.color[0];
        color[3 * v + 1] = s.color[1];
        color[3 * v + 2] = s.color[2];
      }
  return out;
}

// ---------------------------------------------------------------------------

std::int64_t ScalingSchedule::min_count() const {
  std::int64_t m = base_count;
  for (const auto& e : events) m = std::min(m, e.count());
  return m;
}

const ScalingEvent* ScalingSchedule::event_at(int iteration) const {
  for (const auto& e : events)
    if (e.iteration == iteration) return &e;
  return nullptr;
}

Resolution ScalingSchedule::resolution_at(int iteration) const {
  Resolution r = base_resolution;
  for (const auto& e : events) {
    if (e.iteration > iteration) break;
    r = e.resolution;
  }
  return r;
}

Resolution cubic_resolution(std::int64_t count) {
  if (count < 8) throw ValidationError("voxel count " + std::to_string(count) + " too small for a 2^3 grid");
  const int n = static_cast<int>(std::lround(std::cbrt(static_cast<double>(count))));
  return {n, n, n};
}

ScalingSchedule dynamic_schedule(Resolution base, int l, int total_iters, int interval) {
  validate_resolution(base);
  if (base.count() < kMinScheduleCount) throw ValidationError("base voxel count must be >= 64");
  if (l < 0) throw ValidationError("scaling factor l must be >= 0");
  if (interval <= 0) throw ValidationError("scaling interval must be positive");
  if (total_iters < 10 * interval) {
    throw ValidationError("total iterations " + std::to_string(total_iters) + " too small for 10 scaling events at interval " +
                          std::to_string(interval));
  }
  ScalingSchedule s;
  s.kind = ScalingSchedule::Kind::kDynamic;
  s.base_resolution = base;
  s.base_count = base.count();
  s.factor = l;

  // State k in 0..5 is the grid after k shrink events.
  auto state = [&](int k, int iteration) {
    ScalingEvent e;
    e.iteration = iteration;
    e.resolution = scaled_resolution(base, std::exp2(-static_cast<double>(k * l) / 15.0));
    e.ideal_count = std::llround(static_cast<double>(s.base_count) * std::exp2(-static_cast<double>(k * l) / 5.0));
    return e;
  };
  for (int k = 0; k <= 5; ++k) s.events.push_back(state(k, k * interval));
  for (int k = 4; k >= 0; --k) s.events.push_back(state(k, (10 - k) * interval));
  require_min_count(s);
  return s;
}

ScalingSchedule dynamic_schedule(std::int64_t base_count, int l, int total_iters, int interval) {
  if (base_count < kMinScheduleCount) throw ValidationError("base voxel count must be >= 64");
  ScalingSchedule s = dynamic_schedule(cubic_resolution(base_count), l, total_iters, interval);
  // Ideal counts follow the requested base, not the snapped cube.
  s.base_count = base_count;
  for (int k = 0; k < static_cast<int>(s.events.size()); ++k) {
    const int shrink_level = k <= 5 ? k : 10 - k;
    s.events[k].ideal_count =
        std::llround(static_cast<double>(base_count) * std::exp2(-static_cast<double>(shrink_level * l) / 5.0));
  }
  return s;
}

ScalingSchedule progressive_schedule(Resolution base, int start_divisor, int total_iters, int interval) {
  validate_resolution(base);
  if (start_divisor <= 0 || !std::has_single_bit(static_cast<unsigned>(start_divisor))) {
    throw ValidationError("start divisor must be a positive power of two, got " + std::to_string(start_divisor));
  }
  if (interval <= 0) throw ValidationError("scaling interval must be positive");
  const int doublings = std::countr_zero(static_cast<unsigned>(start_divisor));
  if (doublings * interval > total_iters) {
    throw ValidationError("total iterations " + std::to_string(total_iters) + " too small for " +
                          std::to_string(doublings) + " doubling events");
  }
  ScalingSchedule s;
  s.kind = ScalingSchedule::Kind::kProgressive;
  s.base_resolution = base;
  s.base_count = base.count();
  s.factor = start_divisor;
  for (int k = 0; k <= doublings; ++k) {
    const double count_factor = std::exp2(static_cast<double>(k - doublings));
    ScalingEvent e;
    e.iteration = k * interval;
    e.resolution = k == doublings ? base : scaled_resolution(base, std::cbrt(count_factor));
    e.ideal_count = s.base_count / start_divisor * (std::int64_t{1} << k);
    s.events.push_back(e);
  }
  require_min_count(s);
  return s;
}

ScalingSchedule progressive_schedule(std::int64_t base_count, int start_divisor, int total_iters, int interval) {
  if (base_count < kMinScheduleCount) throw ValidationError("base voxel count must be >= 64");
  ScalingSchedule s = progressive_schedule(cubic_resolution(base_count), start_divisor, total_iters, interval);
  s.base_count = base_count;
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    s.events[k].ideal_count = base_count / start_divisor * (std::int64_t{1} << k);
  }
  return s;
}

}  // namespace ig3d
