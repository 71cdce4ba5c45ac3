#pragma once

#include <Eigen/Core>

namespace swarmloc {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Rotation about the world z axis.
Eigen::Matrix3d rot_z(double yaw);

/// Derivative of rot_z(yaw)^T with respect to yaw.
Eigen::Matrix3d rot_z_transpose_derivative(double yaw);

/// Rigid transform restricted to translation plus yaw about z.
///
/// The yaw is always kept wrapped into (-pi, pi]; construct through the
/// constructor or assign through set_yaw() to preserve that.
struct Pose4 {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Pose4() = default;
  Pose4(const Eigen::Vector3d& translation, double yaw_rad)
      : t(translation), yaw_(wrap_angle(yaw_rad)) {}
  Pose4(double x, double y, double z, double yaw_rad)
      : t(x, y, z), yaw_(wrap_angle(yaw_rad)) {}

  static Pose4 identity() { return {}; }

  double yaw() const { return yaw_; }
  void set_yaw(double yaw_rad) { yaw_ = wrap_angle(yaw_rad); }

  Eigen::Matrix3d rotation() const { return rot_z(yaw_); }

  /// 4x4 homogeneous matrix [R_z(yaw) t; 0 1].
  Eigen::Matrix4d matrix() const;

 private:
  double yaw_ = 0.0;
};

/// Local perturbation of a Pose4: additive on translation, wrapped-additive on yaw.
struct Tangent4 {
  Eigen::Vector3d dt = Eigen::Vector3d::Zero();
  double dyaw = 0.0;

  Tangent4() = default;
  Tangent4(const Eigen::Vector3d& d_translation, double d_yaw)
      : dt(d_translation), dyaw(d_yaw) {}

  static Tangent4 zero() { return {}; }

  Eigen::Vector4d vector() const { return {dt.x(), dt.y(), dt.z(), dyaw}; }
  static Tangent4 from_vector(const Eigen::Vector4d& v) {
    return {v.head<3>(), v[3]};
  }
};

/// a * b: result.t = R(a.yaw) b.t + a.t, result.yaw = a.yaw + b.yaw.
Pose4 compose(const Pose4& a, const Pose4& b);

Pose4 inverse(const Pose4& a);

/// inverse(a) * b, i.e. b expressed in the frame of a.
Pose4 relative(const Pose4& a, const Pose4& b);

Pose4 boxplus(const Pose4& p, const Tangent4& v);

/// The v for which boxplus(b, v) == a.
Tangent4 boxminus(const Pose4& a, const Pose4& b);

/// Transforms a point by the pose.
Eigen::Vector3d transform_point(const Pose4& p, const Eigen::Vector3d& x);

}  // namespace swarmloc
