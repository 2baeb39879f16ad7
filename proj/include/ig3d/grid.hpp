#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ig3d {

using Vec3 = Eigen::Vector3d;

/// Vertex counts per axis.
struct Resolution {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::int64_t count() const noexcept { return std::int64_t{nx} * ny * nz; }
  int operator[](int axis) const noexcept { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  bool operator==(const Resolution&) const = default;
  std::string to_string() const;
};

/// Axis-aligned box in world units.
struct BBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p, double tol = 0.0) const;
  /// Throws ValidationError unless finite and max > min on every axis.
  void validate() const;
  bool operator==(const BBox& o) const { return min == o.min && max == o.max; }
};

/// Trilinear stencil of one sample: 8 vertex indices and their weights.
struct Footprint {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  std::size_t vertex_count = 0;  // size of the grid the footprint was taken on
};

struct GridSample {
  double density = 0.0;
  std::array<double, 3> color{};
  Footprint footprint;
};

/// Dense density + colour grid. Vertices span the box inclusively, vertex 0 at
/// bbox.min and vertex n-1 at bbox.max, flattened x-fastest:
/// index = i + nx * (j + ny * k). Colour is stored interleaved (r, g, b) per
/// vertex. All values are pre-activation.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(Resolution res, BBox bbox);

  const Resolution& resolution() const noexcept { return res_; }
  const BBox& bbox() const noexcept { return bbox_; }
  std::size_t vertex_count() const noexcept { return density_.size(); }

  std::size_t index(int i, int j, int k) const noexcept {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(res_.nx) * (j + static_cast<std::size_t>(res_.ny) * k);
  }
  std::array<int, 3> coords(std::size_t index) const noexcept;
  Vec3 vertex_position(int i, int j, int k) const;
  /// Edge length of one cell along each axis.
  Vec3 cell_size() const;

  std::span<double> density() noexcept { return density_; }
  std::span<const double> density() const noexcept { return density_; }
  std::span<double> color() noexcept { return color_; }
  std::span<const double> color() const noexcept { return color_; }

  /// First vertex holding a non-finite value, if any.
  std::optional<std::size_t> find_non_finite() const;

  bool operator==(const VoxelGrid&) const = default;

 private:
  Resolution res_;
  BBox bbox_;
  std::vector<double> density_;
  std::vector<double> color_;
};

/// Gradient storage mirroring a grid's value arrays.
struct GridGrad {
  Resolution resolution;
  std::vector<double> density;
  std::vector<double> color;

  GridGrad() = default;
  explicit GridGrad(Resolution res);

  void zero();
  GridGrad& operator+=(const GridGrad& other);
  bool is_zero() const;
};

VoxelGrid create_grid(Resolution res, const BBox& bbox, double density_init, const std::array<double, 3>& color_init);

/// Trilinear blend of the 8 vertices enclosing `p`. Throws OutOfBoundsError
/// when `p` is outside the box (a relative slack of 1e-9 absorbs rounding).
GridSample sample_trilinear(const VoxelGrid& grid, const Vec3& p);

/// Adjoint of sample_trilinear: scatter weight_i * incoming gradient.
void accumulate_sample_grad(GridGrad& grad, const Footprint& fp, double d_density, const std::array<double, 3>& d_color);

/// Pull the grid back onto a new vertex lattice over the same box.
VoxelGrid resample(const VoxelGrid& grid, Resolution new_res);

// ---------------------------------------------------------------------------
// Voxel-count schedules.

struct ScalingEvent {
  int iteration = 0;
  Resolution resolution;
  /// Exact arithmetic count before per-axis rounding.
  std::int64_t ideal_count = 0;

  std::int64_t count() const noexcept { return resolution.count(); }
};

struct ScalingSchedule {
  enum class Kind { kDynamic, kProgressive };

  Kind kind = Kind::kDynamic;
  Resolution base_resolution;
  std::int64_t base_count = 0;
  int factor = 0;  // l for dynamic, start divisor for progressive
  /// Sorted by iteration; the first event is at iteration 0.
  std::vector<ScalingEvent> events;

  std::int64_t min_count() const;
  /// Event firing exactly at `iteration`, if any.
  const ScalingEvent* event_at(int iteration) const;
  Resolution resolution_at(int iteration) const;
};

/// Shrink by 2^(l/5) in count every `interval` iterations five times, then
/// grow back in five equal steps; per-axis factor 2^(l/15), round to nearest,
/// floor 2. The event list includes the starting state at iteration 0 so the
/// count sequence is palindromic.
ScalingSchedule dynamic_schedule(Resolution base, int l, int total_iters, int interval);
/// Count form; the base is snapped to the nearest cubic resolution.
ScalingSchedule dynamic_schedule(std::int64_t base_count, int l, int total_iters, int interval);

/// Start at base/start_divisor voxels and double the count each interval
/// until the base is reached.
ScalingSchedule progressive_schedule(Resolution base, int start_divisor, int total_iters, int interval);
ScalingSchedule progressive_schedule(std::int64_t base_count, int start_divisor, int total_iters, int interval);

/// Nearest cubic resolution for a voxel count.
Resolution cubic_resolution(std::int64_t count);

}  // namespace ig3d
