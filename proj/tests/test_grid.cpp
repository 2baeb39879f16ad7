#include <doctest.h>

#include <cmath>
#include <random>

#include "ig3d/error.hpp"
#include "ig3d/grid.hpp"

using namespace ig3d;

namespace {

BBox unit_box() { return BBox{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)}; }

VoxelGrid random_grid(Resolution res, std::mt19937_64& rng, const BBox& box = unit_box()) {
  VoxelGrid g(res, box);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : g.density()) v = n(rng);
  for (double& v : g.color()) v = n(rng);
  return g;
}

Vec3 random_point(const BBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return box.min + box.extent().cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
}

}  // namespace

TEST_CASE("vertex layout is x-fastest and spans the box inclusively") {
  const VoxelGrid g(Resolution{4, 3, 5}, unit_box());
  CHECK(g.vertex_count() == 60);
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 4);
  CHECK(g.index(0, 0, 1) == 12);
  CHECK(g.coords(g.index(3, 2, 4)) == std::array<int, 3>{3, 2, 4});
  CHECK(g.vertex_position(0, 0, 0) == unit_box().min);
  CHECK(g.vertex_position(3, 2, 4) == unit_box().max);
  CHECK(g.cell_size().x() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("grid construction rejects degenerate inputs") {
  CHECK_THROWS_AS(VoxelGrid(Resolution{1, 4, 4}, unit_box()), ValidationError);
  CHECK_THROWS_AS(VoxelGrid(Resolution{4, 4, 4}, BBox{Vec3::Zero(), Vec3(1, 0, 1)}), ValidationError);
  CHECK_THROWS_AS(create_grid({4, 4, 4}, unit_box(), NAN, {0, 0, 0}), ValidationError);
}

TEST_CASE("sampling at a vertex returns the vertex value") {
  std::mt19937_64 rng(1);
  const VoxelGrid g = random_grid({5, 6, 7}, rng);
  for (int k : {0, 3, 6}) {
    for (int j : {0, 2, 5}) {
      for (int i : {0, 1, 4}) {
        const GridSample s = sample_trilinear(g, g.vertex_position(i, j, k));
        const std::size_t v = g.index(i, j, k);
        CHECK(s.density == doctest::Approx(g.density()[v]).epsilon(1e-12));
        CHECK(s.color[2] == doctest::Approx(g.color()[3 * v + 2]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("trilinear interpolation reproduces affine fields exactly") {
  // Oracle: trilinear interpolation is exact for f(x) = a + b.x.
  const BBox box{Vec3(-1, 0, 2), Vec3(1, 3, 2.5)};
  VoxelGrid g(Resolution{6, 4, 9}, box);
  const Vec3 b(0.7, -1.3, 2.1);
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 6; ++i) {
        const Vec3 p = g.vertex_position(i, j, k);
        g.density()[g.index(i, j, k)] = 0.25 + b.dot(p);
      }
  std::mt19937_64 rng(2);
  for (int n = 0; n < 200; ++n) {
    const Vec3 p = random_point(box, rng);
    CHECK(sample_trilinear(g, p).density == doctest::Approx(0.25 + b.dot(p)).epsilon(1e-12));
  }
}

TEST_CASE("footprint weights form a partition of unity") {
  std::mt19937_64 rng(3);
  const VoxelGrid g = random_grid({7, 7, 7}, rng);
  for (int n = 0; n < 500; ++n) {
    const GridSample s = sample_trilinear(g, random_point(g.bbox(), rng));
    double sum = 0.0;
    for (double w : s.footprint.weight) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("out-of-box samples are rejected, boundary samples accepted") {
  std::mt19937_64 rng(4);
  const VoxelGrid g = random_grid({4, 4, 4}, rng);
  CHECK_NOTHROW(sample_trilinear(g, Vec3(0.5, 0.5, 0.5)));
  CHECK_NOTHROW(sample_trilinear(g, Vec3(-0.5, 0.0, 0.5)));
  CHECK_THROWS_AS(sample_trilinear(g, Vec3(0.51, 0.0, 0.0)), OutOfBoundsError);
  CHECK_THROWS_AS(sample_trilinear(g, Vec3(0.0, -0.6, 0.0)), OutOfBoundsError);
}

TEST_CASE("accumulate_sample_grad is the adjoint of sampling") {
  // <sample(grid), g> == <grid, accumulate(g)> for random grid and upstream g.
  std::mt19937_64 rng(5);
  const Resolution res{5, 4, 6};
  for (int trial = 0; trial < 20; ++trial) {
    const VoxelGrid g = random_grid(res, rng);
    const Vec3 p = random_point(g.bbox(), rng);
    std::normal_distribution<double> n(0.0, 1.0);
    const double gd = n(rng);
    const std::array<double, 3> gc{n(rng), n(rng), n(rng)};
    const GridSample s = sample_trilinear(g, p);
    const double lhs = s.density * gd + s.color[0] * gc[0] + s.color[1] * gc[1] + s.color[2] * gc[2];
    GridGrad grad(res);
    accumulate_sample_grad(grad, s.footprint, gd, gc);
    double rhs = 0.0;
    for (std::size_t v = 0; v < g.vertex_count(); ++v) rhs += grad.density[v] * g.density()[v];
    for (std::size_t v = 0; v < g.color().size(); ++v) rhs += grad.color[v] * g.color()[v];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("accumulate_sample_grad rejects footprints from another grid") {
  std::mt19937_64 rng(6);
  const VoxelGrid g = random_grid({4, 4, 4}, rng);
  const GridSample s = sample_trilinear(g, Vec3::Zero());
  GridGrad other({5, 5, 5});
  CHECK_THROWS_AS(accumulate_sample_grad(other, s.footprint, 1.0, {0, 0, 0}), ShapeMismatchError);
}

TEST_CASE("grid gradients add and zero") {
  GridGrad a({2, 2, 2});
  GridGrad b({2, 2, 2});
  CHECK(a.is_zero());
  b.density[3] = 2.0;
  b.color[5] = -1.0;
  a += b;
  a += b;
  CHECK(a.density[3] == 4.0);
  CHECK(a.color[5] == -2.0);
  a.zero();
  CHECK(a.is_zero());
  GridGrad c({3, 2, 2});
  CHECK_THROWS_AS(a += c, ShapeMismatchError);
}

TEST_CASE("resample to the same lattice is the identity") {
  std::mt19937_64 rng(7);
  const VoxelGrid g = random_grid({6, 5, 4}, rng);
  const VoxelGrid r = resample(g, g.resolution());
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    CHECK(r.density()[v] == doctest::Approx(g.density()[v]).epsilon(1e-12));
  }
}

TEST_CASE("resample preserves affine fields across resolutions") {
  VoxelGrid g(Resolution{9, 9, 9}, unit_box());
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 9; ++i) {
        const Vec3 p = g.vertex_position(i, j, k);
        g.density()[g.index(i, j, k)] = 1.0 - 2.0 * p.x() + 0.5 * p.z();
      }
  for (const Resolution r : {Resolution{4, 4, 4}, Resolution{13, 7, 21}}) {
    const VoxelGrid out = resample(g, r);
    CHECK(out.bbox() == g.bbox());
    for (int k = 0; k < r.nz; ++k)
      for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i) {
          const Vec3 p = out.vertex_position(i, j, k);
          CHECK(out.density()[out.index(i, j, k)] == doctest::Approx(1.0 - 2.0 * p.x() + 0.5 * p.z()).epsilon(1e-12));
        }
  }
}

TEST_CASE("non-finite vertices are located") {
  VoxelGrid g(Resolution{3, 3, 3}, unit_box());
  CHECK_FALSE(g.find_non_finite().has_value());
  g.color()[3 * 14 + 1] = INFINITY;
  REQUIRE(g.find_non_finite().has_value());
  CHECK(*g.find_non_finite() == 14);
}

// ---------------------------------------------------------------------------
// Schedules.

TEST_CASE("dynamic schedule on a 1,024,000 voxel base") {
  const ScalingSchedule s = dynamic_schedule(std::int64_t{1024000}, 4, 2000, 150);
  REQUIRE(s.events.size() == 11);
  // Count arithmetic: 1,024,000 * 2^(-4) = 64,000 at the deepest state.
  CHECK(s.events[5].ideal_count == 64000);
  // Per axis 101 * 2^(-4/3) = 40.09 -> 40.
  CHECK(s.events[5].resolution == Resolution{40, 40, 40});
  CHECK(s.min_count() == 64000);
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    CHECK(s.events[k].iteration == static_cast<int>(k) * 150);
    CHECK(s.events[k].count() == s.events[10 - k].count());
    CHECK(s.events[k].ideal_count == s.events[10 - k].ideal_count);
  }
  // Shrinks monotonically then grows back.
  for (int k = 0; k < 5; ++k) CHECK(s.events[k].count() > s.events[k + 1].count());
  CHECK(s.events.front().resolution == Resolution{101, 101, 101});
  CHECK(s.events.back().resolution == Resolution{101, 101, 101});
}

TEST_CASE("dynamic schedule with l = 0 keeps the resolution") {
  const ScalingSchedule s = dynamic_schedule(Resolution{20, 24, 28}, 0, 100, 10);
  for (const auto& e : s.events) CHECK(e.resolution == Resolution{20, 24, 28});
}

TEST_CASE("dynamic schedule per-axis factors") {
  const ScalingSchedule s = dynamic_schedule(Resolution{32, 32, 32}, 4, 600, 45);
  // State k scales each axis by 2^(-4k/15).
  for (int k = 0; k <= 5; ++k) {
    const int expect = static_cast<int>(std::lround(32 * std::exp2(-4.0 * k / 15.0)));
    CHECK(s.events[k].resolution.nx == expect);
  }
  CHECK(s.resolution_at(0) == Resolution{32, 32, 32});
  CHECK(s.resolution_at(44) == Resolution{32, 32, 32});
  CHECK(s.resolution_at(225) == s.events[5].resolution);
  CHECK(s.resolution_at(599) == Resolution{32, 32, 32});
  CHECK(s.event_at(45) == &s.events[1]);
  CHECK(s.event_at(46) == nullptr);
}

TEST_CASE("dynamic schedule validation") {
  CHECK_THROWS_AS(dynamic_schedule(Resolution{32, 32, 32}, 4, 1499, 150), ValidationError);
  CHECK_THROWS_AS(dynamic_schedule(Resolution{32, 32, 32}, -1, 2000, 150), ValidationError);
  CHECK_THROWS_AS(dynamic_schedule(Resolution{32, 32, 32}, 4, 2000, 0), ValidationError);
  // 8^3 with l = 10 would shrink each axis to round(8 / 8) -> 2: 8 voxels.
  CHECK_THROWS_AS(dynamic_schedule(Resolution{8, 8, 8}, 10, 2000, 150), ValidationError);
}

TEST_CASE("progressive schedule doubles the count up to the base") {
  const ScalingSchedule s = progressive_schedule(std::int64_t{4096}, 4, 1000, 100);
  REQUIRE(s.events.size() == 3);
  CHECK(s.events[0].iteration == 0);
  CHECK(s.events[0].ideal_count == 1024);
  CHECK(s.events[1].iteration == 100);
  CHECK(s.events[1].ideal_count == 2048);
  CHECK(s.events[2].iteration == 200);
  CHECK(s.events[2].ideal_count == 4096);
  CHECK(s.events[2].resolution == Resolution{16, 16, 16});
  // Per axis 16 * cbrt(1/4) = 10.08.
  CHECK(s.events[0].resolution == Resolution{10, 10, 10});
  CHECK_THROWS_AS(progressive_schedule(Resolution{16, 16, 16}, 3, 1000, 100), ValidationError);
  CHECK_THROWS_AS(progressive_schedule(Resolution{16, 16, 16}, 16, 300, 100), ValidationError);
}

TEST_CASE("property: dynamic schedules are palindromic with a bounded deepest state") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> axis(8, 60);
  std::uniform_int_distribution<int> level(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const Resolution base{axis(rng), axis(rng), axis(rng)};
    const int l = level(rng);
    ScalingSchedule s;
    try {
      s = dynamic_schedule(base, l, 1000, 100);
    } catch (const ValidationError&) {
      continue;  // too small for this l
    }
    for (std::size_t k = 0; k < 11; ++k) CHECK(s.events[k].resolution == s.events[10 - k].resolution);
    CHECK(s.events.front().resolution == base);
    // Rounding each axis moves it by at most half a vertex.
    const double f = std::exp2(-5.0 * l / 15.0);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(s.events[5].resolution[a] - std::max(2.0, base[a] * f)) <= 0.5 + 1e-9);
    }
  }
}

TEST_CASE("cubic resolution snaps to the nearest cube") {
  CHECK(cubic_resolution(1024000) == Resolution{101, 101, 101});
  CHECK(cubic_resolution(27) == Resolution{3, 3, 3});
  CHECK_THROWS_AS(cubic_resolution(7), ValidationError);
}
