#pragma once

#include <Eigen/Core>
#include <random>
#include <vector>

#include "ig3d/grid.hpp"

namespace ig3d {

using Mat4 = Eigen::Matrix4d;

/// Pinhole camera. Camera space is right-handed with +x right, +y up and the
/// view direction along -z; pixel rows grow downwards. Pixels are square, so
/// the vertical field of view follows from the aspect ratio.
struct Camera {
  int width = 0;
  int height = 0;
  double fov_x = 0.0;  // radians
  Mat4 cam_to_world = Mat4::Identity();

  void validate() const;
  Vec3 position() const { return cam_to_world.block<3, 1>(0, 3); }
  Vec3 forward() const { return -cam_to_world.block<3, 1>(0, 2); }
  double focal() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;
  bool hit = false;
};

/// One unclipped ray per pixel through the pixel centre, row-major.
std::vector<Ray> rays_for_camera(const Camera& camera);

/// Clip a ray against the box (slab test), setting t_near/t_far and hit.
/// t_near is clamped to >= 0 so cameras inside the box work.
bool clip_to_box(Ray& ray, const BBox& box);

/// Rigid cam-to-world looking from `eye` at `target`.
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Throws DatasetError(kInvalidPose) unless the rotation block is orthonormal
/// with determinant +1 within `tol` and the bottom row is (0, 0, 0, 1).
void validate_rigid(const Mat4& m, double tol = 1e-6);

struct CameraDistribution {
  enum class Mode { kOrbit, kFrontFacing };

  Mode mode = Mode::kOrbit;
  double radius_min = 2.0;
  double radius_max = 2.0;
  double elevation_min = 0.0;  // radians
  double elevation_max = 0.6;
  double azimuth_min = 0.0;
  double azimuth_max = 6.283185307179586;
  /// Frontal cone for kFrontFacing: azimuth/elevation are drawn within
  /// +-cone_half_angle of the front direction.
  double front_azimuth = 0.0;
  double front_elevation = 0.0;
  double cone_half_angle = 0.35;
  Vec3 target = Vec3::Zero();
  double fov_x = 0.7;
  int width = 32;
  int height = 32;

  void validate() const;
};

Camera random_camera_pose(const CameraDistribution& dist, std::mt19937_64& rng);

/// Camera on a sphere around `dist.target` at the given spherical angles.
Camera orbit_camera(const CameraDistribution& dist, double azimuth, double elevation, double radius);

/// `n` cameras evenly spaced in azimuth at mid elevation and mid radius.
std::vector<Camera> orbit_cameras(const CameraDistribution& dist, int n, double azimuth_offset = 0.0);

}  // namespace ig3d
