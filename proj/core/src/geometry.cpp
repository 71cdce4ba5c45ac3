#include "swarmloc/geometry.hpp"

#include <cmath>
#include <numbers>

namespace swarmloc {

double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(angle, kTwoPi);  // [-pi, pi]
  if (wrapped <= -std::numbers::pi) {
    wrapped += kTwoPi;
  }
  return wrapped;
}

Eigen::Matrix3d rot_z(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

Eigen::Matrix3d rot_z_transpose_derivative(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d d;
  d << -s, c, 0.0,
       -c, -s, 0.0,
       0.0, 0.0, 0.0;
  return d;
}

Eigen::Matrix4d Pose4::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = t;
  return m;
}

Pose4 compose(const Pose4& a, const Pose4& b) {
  return {a.rotation() * b.t + a.t, a.yaw() + b.yaw()};
}

Pose4 inverse(const Pose4& a) {
  return {-(a.rotation().transpose() * a.t), -a.yaw()};
}

Pose4 relative(const Pose4& a, const Pose4& b) {
  return {a.rotation().transpose() * (b.t - a.t), b.yaw() - a.yaw()};
}

Pose4 boxplus(const Pose4& p, const Tangent4& v) {
  return {p.t + v.dt, p.yaw() + v.dyaw};
}

Tangent4 boxminus(const Pose4& a, const Pose4& b) {
  return {a.t - b.t, wrap_angle(a.yaw() - b.yaw())};
}

Eigen::Vector3d transform_point(const Pose4& p, const Eigen::Vector3d& x) {
  return p.rotation() * x + p.t;
}

}  // namespace swarmloc
