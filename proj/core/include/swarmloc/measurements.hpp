#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "swarmloc/geometry.hpp"

namespace swarmloc {

using DroneId = int;

/// Unordered drone pair, stored with first < second.
struct DronePair {
  DroneId first = 0;
  DroneId second = 0;

  DronePair() = default;
  DronePair(DroneId a, DroneId b) : first(a < b ? a : b), second(a < b ? b : a) {}

  bool involves(DroneId id) const { return first == id || second == id; }
  DroneId other(DroneId id) const { return first == id ? second : first; }

  friend auto operator<=>(const DronePair&, const DronePair&) = default;
};

/// One UWB range between an unordered pair of drones.
struct DistanceMeas {
  DronePair pair;
  double range = 0.0;  // meters

  friend bool operator==(const DistanceMeas&, const DistanceMeas&) = default;
};

/// Anonymous visual detection: where the observer saw *some* drone, in its
/// own body frame. There is deliberately no target id.
struct DetectionMeas {
  DroneId observer = 0;
  Eigen::Vector3d rel_t = Eigen::Vector3d::Zero();
  double apparent_size = 0.0;  // size_const / range

  friend bool operator==(const DetectionMeas& a, const DetectionMeas& b) {
    return a.observer == b.observer && a.rel_t == b.rel_t &&
           a.apparent_size == b.apparent_size;
  }
};

/// What a drone's odometry reports at one step: the increment since the
/// previous step and the integrated pose in its own VIO frame.
struct VioMeas {
  Pose4 delta;
  Pose4 pose;
};

}  // namespace swarmloc
