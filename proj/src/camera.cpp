#include "ig3d/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <numbers>

#include "ig3d/error.hpp"

namespace ig3d {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be positive");
  if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) throw ValidationError("fov_x must lie in (0, pi)");
  validate_rigid(cam_to_world);
}

double Camera::focal() const { return 0.5 * width / std::tan(0.5 * fov_x); }

void validate_rigid(const Mat4& m, double tol) {
  if (!m.allFinite()) throw DatasetError(DatasetError::Kind::kInvalidPose, "pose contains non-finite values");
  const Eigen::Matrix3d r = m.block<3, 3>(0, 0);
  const double ortho_err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > tol) {
    throw DatasetError(DatasetError::Kind::kInvalidPose,
                       "rotation block is not orthonormal (max deviation " + std::to_string(ortho_err) + ")");
  }
  const double det = r.determinant();
  if (std::abs(det - 1.0) > tol) {
    throw DatasetError(DatasetError::Kind::kInvalidPose,
                       "rotation block has determinant " + std::to_string(det) + ", expected +1");
  }
  if (m.row(3).cwiseAbs().head<3>().maxCoeff() > tol || std::abs(m(3, 3) - 1.0) > tol) {
    throw DatasetError(DatasetError::Kind::kInvalidPose, "pose bottom row must be (0, 0, 0, 1)");
  }
}

std::vector<Ray> rays_for_camera(const Camera& camera) {
  camera.validate();
  const double f = camera.focal();
  const Eigen::Matrix3d rot = camera.cam_to_world.block<3, 3>(0, 0);
  const Vec3 origin = camera.position();
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(camera.width) * camera.height);
  for (int py = 0; py < camera.height; ++py) {
    for (int px = 0; px < camera.width; ++px) {
      const Vec3 d_cam((px + 0.5 - 0.5 * camera.width) / f, -(py + 0.5 - 0.5 * camera.height) / f, -1.0);
      Ray ray;
      ray.origin = origin;
      ray.direction = (rot * d_cam).normalized();
      ray.t_far = std::numeric_limits<double>::infinity();
      rays.push_back(ray);
    }
  }
  return rays;
}

bool clip_to_box(Ray& ray, const BBox& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) {
        ray.hit = false;
        return false;
      }
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  ray.hit = t0 < t1;
  if (ray.hit) {
    ray.t_near = t0;
    ray.t_far = t1;
  }
  return ray.hit;
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 cam_up = right.cross(forward);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = cam_up;
  m.block<3, 1>(0, 2) = -forward;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

void CameraDistribution::validate() const {
  if (!(radius_min > 0.0) || radius_max < radius_min) throw ValidationError("camera radius range invalid");
  if (elevation_max < elevation_min || azimuth_max < azimuth_min) {
    throw ValidationError("camera angle ranges must be nonempty");
  }
  const double half_pi = 0.5 * std::numbers::pi;
  if (elevation_min <= -half_pi || elevation_max >= half_pi) {
    throw ValidationError("elevation must stay strictly inside (-pi/2, pi/2)");
  }
  if (mode == Mode::kFrontFacing &&
      (cone_half_angle < 0.0 || std::abs(front_elevation) + cone_half_angle >= half_pi)) {
    throw ValidationError("frontal cone must stay strictly inside (-pi/2, pi/2) in elevation");
  }
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be positive");
  if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) throw ValidationError("fov_x must lie in (0, pi)");
}

Camera orbit_camera(const CameraDistribution& dist, double azimuth, double elevation, double radius) {
  const Vec3 offset(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                    std::sin(elevation));
  Camera cam;
  cam.width = dist.width;
  cam.height = dist.height;
  cam.fov_x = dist.fov_x;
  cam.cam_to_world = look_at(dist.target + radius * offset, dist.target);
  return cam;
}

Camera random_camera_pose(const CameraDistribution& dist, std::mt19937_64& rng) {
  dist.validate();
  auto uniform = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  double az = 0.0;
  double el = 0.0;
  if (dist.mode == CameraDistribution::Mode::kOrbit) {
    az = uniform(dist.azimuth_min, dist.azimuth_max);
    el = uniform(dist.elevation_min, dist.elevation_max);
  } else {
    az = uniform(dist.front_azimuth - dist.cone_half_angle, dist.front_azimuth + dist.cone_half_angle);
    el = uniform(dist.front_elevation - dist.cone_half_angle, dist.front_elevation + dist.cone_half_angle);
  }
  const double r = uniform(dist.radius_min, dist.radius_max);
  return orbit_camera(dist, az, el, r);
}

std::vector<Camera> orbit_cameras(const CameraDistribution& dist, int n, double azimuth_offset) {
  dist.validate();
  std::vector<Camera> cams;
  const double el = 0.5 * (dist.elevation_min + dist.elevation_max);
  const double r = 0.5 * (dist.radius_min + dist.radius_max);
  for (int i = 0; i < n; ++i) {
    const double az = azimuth_offset + 2.0 * std::numbers::pi * i / std::max(n, 1);
    cams.push_back(orbit_camera(dist, az, el, r));
  }
  return cams;
}

}  // namespace ig3d
