#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <optional>

namespace shpc {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Pose = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

/// Rigid transform robot/camera -> map.
using Pose6D = Pose<double>;
using Intrinsics = Mat3<double>;

/// Pinhole intrinsics for a square-pixel camera with the given horizontal
/// field of view. The principal point sits at the image centre in continuous
/// pixel coordinates (pixel (c, r) spans [c, c+1) x [r, r+1)).
template <typename Scalar = double>
Mat3<Scalar> pinhole_intrinsics(int width, int height, Scalar fov_rad) {
  const Scalar f = Scalar(0.5) * Scalar(width) / std::tan(fov_rad / Scalar(2));
  Mat3<Scalar> K = Mat3<Scalar>::Identity();
  K(0, 0) = f;
  K(1, 1) = f;
  K(0, 2) = Scalar(0.5) * Scalar(width);
  K(1, 2) = Scalar(0.5) * Scalar(height);
  return K;
}

template <typename Scalar>
Pose<Scalar> make_pose(const Mat3<Scalar>& rotation, const Vec3<Scalar>& translation) {
  Pose<Scalar> pose = Pose<Scalar>::Identity();
  pose.linear() = rotation;
  pose.translation() = translation;
  return pose;
}

/// Max absolute deviation of R^T R from identity, and |det R - 1|.
template <typename Scalar>
Scalar rigidity_error(const Pose<Scalar>& pose) {
  const Mat3<Scalar> R = pose.linear();
  const Scalar ortho = (R.transpose() * R - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(R.determinant() - Scalar(1)));
}

/// Gram-Schmidt on the rotation columns, keeping the z axis direction.
template <typename Scalar>
void orthonormalize(Pose<Scalar>& pose) {
  Mat3<Scalar> R = pose.linear();
  Vec3<Scalar> z = R.col(2).normalized();
  Vec3<Scalar> x = (R.col(0) - R.col(0).dot(z) * z).normalized();
  Vec3<Scalar> y = z.cross(x);
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  pose.linear() = R;
}

template <typename Scalar>
struct Attitude {
  Scalar roll;
  Scalar pitch;  ///< elevation of the forward (x) axis, positive nose-up
  Scalar yaw;
};

template <typename Scalar>
Attitude<Scalar> attitude(const Pose<Scalar>& pose) {
  const Mat3<Scalar> R = pose.linear();
  const Scalar s = std::clamp(R(2, 0), Scalar(-1), Scalar(1));
  return {std::atan2(R(2, 1), R(2, 2)), std::asin(s), std::atan2(R(1, 0), R(0, 0))};
}

/// Rotation with forward axis along `heading` and up axis `up` (heading is
/// projected into the plane orthogonal to up). Returns nullopt when heading is
/// (nearly) parallel to up.
template <typename Scalar>
std::optional<Mat3<Scalar>> frame_from_heading(const Vec3<Scalar>& heading, const Vec3<Scalar>& up) {
  const Vec3<Scalar> z = up.normalized();
  Vec3<Scalar> x = heading - heading.dot(z) * z;
  const Scalar n = x.norm();
  if (!(n > Scalar(1e-9))) return std::nullopt;
  x /= n;
  Mat3<Scalar> R;
  R.col(0) = x;
  R.col(1) = z.cross(x);
  R.col(2) = z;
  return R;
}

/// Planar robot pose from (x, y, yaw) on z = height.
template <typename Scalar>
Pose<Scalar> planar_pose(Scalar x, Scalar y, Scalar yaw, Scalar z = Scalar(0)) {
  Mat3<Scalar> R = Eigen::AngleAxis<Scalar>(yaw, Vec3<Scalar>::UnitZ()).toRotationMatrix();
  return make_pose<Scalar>(R, Vec3<Scalar>(x, y, z));
}

template <typename Scalar>
struct PixelProjection {
  Scalar u;      ///< continuous column coordinate
  Scalar v;      ///< continuous row coordinate
  Scalar depth;  ///< camera-frame z
};

/// Projects a map point through a camera with pose camera->map. Camera frame:
/// z forward, x right, y down. Returns nullopt for points with depth <= 0.
template <typename Scalar>
std::optional<PixelProjection<Scalar>> project_point(const Vec3<Scalar>& point, const Mat3<Scalar>& K,
                                                     const Pose<Scalar>& camera_to_map) {
  const Vec3<Scalar> pc = camera_to_map.inverse(Eigen::Isometry) * point;
  if (!(pc.z() > Scalar(0))) return std::nullopt;
  const Vec3<Scalar> h = K * pc;
  return PixelProjection<Scalar>{h.x() / h.z(), h.y() / h.z(), pc.z()};
}

/// Backprojects continuous pixel coordinates (u, v) at z-depth `depth`:
/// m = P [depth * I | e3]^T K^-1 [u v 1]^T.
template <typename Scalar>
Vec3<Scalar> backproject_pixel(Scalar u, Scalar v, Scalar depth, const Mat3<Scalar>& K,
                               const Pose<Scalar>& camera_to_map) {
  const Vec3<Scalar> ray = K.inverse() * Vec3<Scalar>(u, v, Scalar(1));
  return camera_to_map * (depth * ray);
}

}  // namespace shpc
