#include "swarmloc/residuals.hpp"

namespace swarmloc {

bool DistanceResidual::evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                                std::span<nls::JacobianBlock> jacobians) const {
  const Eigen::Vector3d diff = values[0].t - values[1].t;
  const double dist = diff.norm();
  residual.resize(1);
  residual[0] = weight_ * (range_ - dist);
  if (jacobians.empty()) return dist >= kMinRangeForJacobian;

  for (auto& j : jacobians) j.setZero(1, nls::kBlockSize);
  if (dist < kMinRangeForJacobian) return false;
  const Eigen::RowVector3d dir = diff.transpose() / dist;
  jacobians[0].block<1, 3>(0, 0) = -weight_ * dir;
  jacobians[1].block<1, 3>(0, 0) = weight_ * dir;
  return true;
}

bool DetectionResidual::evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                                 std::span<nls::JacobianBlock> jacobians) const {
  const Pose4& obs = values[0];
  const Pose4& tgt = values[1];
  const Eigen::Matrix3d rt = obs.rotation().transpose();
  const Eigen::Vector3d diff = tgt.t - obs.t;
  residual = weight_ * (rt * diff - rel_);
  if (jacobians.empty()) return true;

  jacobians[0].setZero(3, nls::kBlockSize);
  jacobians[1].setZero(3, nls::kBlockSize);
  jacobians[0].block<3, 3>(0, 0) = -weight_ * rt;
  jacobians[0].col(3) = weight_ * rot_z_transpose_derivative(obs.yaw()) * diff;
  jacobians[1].block<3, 3>(0, 0) = weight_ * rt;
  return true;
}

bool VioResidual::evaluate(std::span<const Pose4> values, nls::ResidualVector& residual,
                           std::span<nls::JacobianBlock> jacobians) const {
  const Pose4& a = values[0];
  const Pose4& b = values[1];
  const Eigen::Matrix3d rz_t = delta_.rotation().transpose();
  const Eigen::Matrix3d ra_t = a.rotation().transpose();
  const Eigen::Vector3d diff = b.t - a.t;
  const Eigen::Vector3d rel_t = ra_t * diff;

  // compose(inverse(z), relative(a, b))
  residual.resize(4);
  residual.head<3>() = weight_t_ * (rz_t * (rel_t - delta_.t));
  residual[3] = weight_yaw_ * wrap_angle(b.yaw() - a.yaw() - delta_.yaw());
  if (jacobians.empty()) return true;

  const Eigen::Matrix3d rot = rz_t * ra_t;
  jacobians[0].setZero(4, nls::kBlockSize);
  jacobians[1].setZero(4, nls::kBlockSize);
  jacobians[0].block<3, 3>(0, 0) = -weight_t_ * rot;
  jacobians[0].block<3, 1>(0, 3) = weight_t_ * rz_t * rot_z_transpose_derivative(a.yaw()) * diff;
  jacobians[0](3, 3) = -weight_yaw_;
  jacobians[1].block<3, 3>(0, 0) = weight_t_ * rot;
  jacobians[1](3, 3) = weight_yaw_;
  return true;
}

}  // namespace swarmloc
