#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "swarmloc/geometry.hpp"
#include "swarmloc/measurements.hpp"
#include "swarmloc/simworld.hpp"

namespace swarmloc {

struct TimedPose {
  double t = 0.0;
  Pose4 pose;
};

struct Alignment {
  Pose4 transform;          // maps estimated points onto truth
  bool degenerate = false;  // set when the input had no horizontal spread
};

/// Yaw plus translation minimizing sum |T * est_i - truth_i|^2, closed form
/// via a 2D Procrustes on the horizontal components. Throws
/// std::invalid_argument on size mismatch or fewer than 2 pairs.
Alignment align_4dof(std::span<const Eigen::Vector3d> estimated,
                     std::span<const Eigen::Vector3d> truth);

/// True body-frame pose of `target` seen from `observer` at every grid sample.
std::vector<TimedPose> relative_truth(const GroundTruth& truth, DroneId observer, DroneId target);

struct RmseRow {
  DroneId observer = 0;
  DroneId target = 0;
  double x = 0.0;  // meters
  double y = 0.0;
  double z = 0.0;
  double yaw_deg = 0.0;
  double trajectory_length = 0.0;  // meters, of the true relative path over the samples
  std::size_t samples = 0;

  double translation() const { return (x + y + z) / 3.0; }
};

struct RmseReport {
  std::vector<RmseRow> rows;

  const RmseRow* find(DroneId observer, DroneId target) const;
};

/// RMSE of time-matched samples: each estimate is paired with the truth
/// sample nearest in time if that lies within half a period. `alignment`
/// is applied to the estimates first. Throws std::runtime_error when no
/// sample matches.
RmseRow rmse(std::span<const TimedPose> estimates, std::span<const TimedPose> truth,
             double period, const Pose4& alignment = Pose4::identity());

struct ConsistencyStats {
  std::size_t samples = 0;
  std::size_t within = 0;
  double max_translation = 0.0;
  double max_yaw_deg = 0.0;

  double fraction() const {
    return samples == 0 ? 0.0 : static_cast<double>(within) / static_cast<double>(samples);
  }
};

/// compose(k's estimate of i, i's estimate of k) compared to identity at
/// every time present in both series.
ConsistencyStats cross_agent_consistency(std::span<const TimedPose> k_sees_i,
                                         std::span<const TimedPose> i_sees_k, double period,
                                         double tol_translation, double tol_yaw_deg);

}  // namespace swarmloc
