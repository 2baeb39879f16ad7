#include <doctest.h>

#include <cmath>

#include "ig3d/error.hpp"
#include "ig3d/metrics.hpp"
#include "ig3d/scenes.hpp"

using namespace ig3d;

TEST_CASE("psnr") {
  const Tensor a(3, 2, 2, 0.5);
  Tensor b = a;
  CHECK(psnr(a, b) == kPsnrCap);
  for (double& v : b.data) v += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  CHECK_THROWS_AS(psnr(a, Tensor(3, 2, 3)), ShapeMismatchError);
}

TEST_CASE("silhouette iou") {
  CHECK(silhouette_iou({0, 0}, {0, 0}) == 1.0);
  CHECK(silhouette_iou({1, 1, 0, 0}, {1, 0, 1, 0}) == doctest::Approx(1.0 / 3.0));
  CHECK(silhouette_iou({0.6, 0.4}, {0.5, 0.49}) == 1.0);
  CHECK(silhouette_iou({1, 0}, {0, 1}) == 0.0);
  CHECK_THROWS_AS(silhouette_iou({1}, {1, 0}), ShapeMismatchError);
}

TEST_CASE("channel statistics") {
  Tensor a(3, 1, 2, 0.0);
  Tensor b(3, 1, 2, 0.0);
  b.at(0, 0, 0) = 1.0;
  b.at(2, 0, 1) = -0.5;
  const auto d = mean_channel_difference(a, b);
  CHECK(d[0] == 0.5);
  CHECK(d[1] == 0.0);
  CHECK(d[2] == -0.25);
  const auto m = masked_channel_mean(b, {1.0, 0.0});
  CHECK(m[0] == 1.0);
  CHECK(m[2] == 0.0);
  CHECK(masked_channel_mean(b, {0.0, 0.0}) == std::array<double, 3>{0, 0, 0});
}

TEST_CASE("comparing a grid with itself") {
  SceneSpec spec;
  spec.primitives.push_back(SpherePrimitive{Vec3::Zero(), 0.3, {0.2, 0.7, 0.4}});
  const VoxelGrid g = rasterize_scene(spec, {12, 12, 12}, {});
  CameraDistribution dist;
  dist.width = 16;
  dist.height = 16;
  const MetricsReport r = compare_grids(g, g, orbit_cameras(dist, 4), {});
  REQUIRE(r.views.size() == 4);
  CHECK(r.mean_psnr == kPsnrCap);
  CHECK(r.mean_iou == 1.0);
  const auto j = r.to_json();
  CHECK(j["views"].size() == 4);
  CHECK(j["mean_psnr"] == kPsnrCap);
}
