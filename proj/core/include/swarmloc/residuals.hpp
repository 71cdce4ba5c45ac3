#pragma once

#include <Eigen/Core>

#include "swarmloc/geometry.hpp"
#include "swarmloc/nls.hpp"

namespace swarmloc {

/// Positions closer than this make the range Jacobian undefined.
inline constexpr double kMinRangeForJacobian = 1e-6;

/// w * (z - |x_i - x_j|).
class DistanceResidual final : public nls::ResidualBlock {
 public:
  DistanceResidual(int var_i, int var_j, double range, double weight)
      : ResidualBlock({var_i, var_j}), range_(range), weight_(weight) {}

  int dimension() const override { return 1; }
  std::string_view kind() const override { return "distance"; }
  bool evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                std::span<nls::JacobianBlock> jacobians) const override;

 private:
  double range_;
  double weight_;
};

/// w * (translation of inverse(P_obs) * P_tgt - z), i.e. the target position
/// rotated into the observer's body frame minus the detection.
class DetectionResidual final : public nls::ResidualBlock {
 public:
  DetectionResidual(int var_observer, int var_target, const Eigen::Vector3d& rel,
                    double weight)
      : ResidualBlock({var_observer, var_target}), rel_(rel), weight_(weight) {}

  int dimension() const override { return 3; }
  std::string_view kind() const override { return "detection"; }
  bool evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                std::span<nls::JacobianBlock> jacobians) const override;

 private:
  Eigen::Vector3d rel_;
  double weight_;
};

/// Tangent of inverse(z) * inverse(P_a) * P_b with the yaw wrapped; the
/// translation rows are scaled by weight_t and the yaw row by weight_yaw.
class VioResidual final : public nls::ResidualBlock {
 public:
  VioResidual(int var_a, int var_b, const Pose4& delta, double weight_t, double weight_yaw)
      : ResidualBlock({var_a, var_b}), delta_(delta), weight_t_(weight_t), weight_yaw_(weight_yaw) {}

  int dimension() const override { return 4; }
  std::string_view kind() const override { return "vio"; }
  bool evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                std::span<nls::JacobianBlock> jacobians) const override;

 private:
  Pose4 delta_;
  double weight_t_;
  double weight_yaw_;
};

}  // namespace swarmloc
