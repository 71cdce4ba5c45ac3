#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "swarmloc/geometry.hpp"
#include "swarmloc/measurements.hpp"

namespace swarmloc {

enum class TrajectoryKind { kHover, kCircle, kLissajous, kWaypointLinear };

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& name);

/// Analytic ground-truth motion for one drone.
///
/// Outside [motion_start, motion_end] the drone holds the pose it has at the
/// nearest end of that interval, which is how hover phases are scripted.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kHover;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  // circle: center + radius * (cos(rate t + phase), sin(rate t + phase), 0)
  double radius = 1.0;
  double angular_rate = 0.0;
  double phase = 0.0;

  // lissajous: center + amplitude .* sin(frequency * t + phases)
  Eigen::Vector3d amplitude = Eigen::Vector3d::Zero();
  Eigen::Vector3d frequency = Eigen::Vector3d::Zero();
  Eigen::Vector3d phases = Eigen::Vector3d::Zero();

  // waypoint-linear: constant-speed polyline, held at the last waypoint
  // unless loop is set (then the path closes back to the first waypoint).
  std::vector<Eigen::Vector3d> waypoints;
  double speed = 1.0;
  bool loop = false;

  double yaw0 = 0.0;
  double yaw_rate = 0.0;

  double motion_start = 0.0;
  double motion_end = std::numeric_limits<double>::infinity();

  Pose4 pose_at(double t) const;

  /// Upper bound on the translational speed along the path.
  double max_speed() const;
};

struct NoiseConfig {
  double sigma_d = 0.1;         // UWB range, meters
  double sigma_det = 0.05;      // detection, meters per axis
  double sigma_vio_t = 0.005;   // meters per step per axis
  double sigma_vio_yaw = 0.001; // radians per step
  double range_dropout_prob = 0.0;
  double fov_half_angle = std::numbers::pi / 4.0;
  double det_max_range = 8.0;
  double det_miss_prob = 0.0;
  /// Probability per observer and step of a spurious detection whose
  /// apparent size does not match a drone.
  double det_clutter_prob = 0.0;
  double drone_size = 0.3;  // meters; apparent_size = drone_size / range
  std::uint64_t rng_seed = 1;

  static NoiseConfig noiseless();

  /// Throws std::invalid_argument on a negative sigma or a probability
  /// outside [0, 1].
  void validate() const;
};

/// World-frame poses sampled on a uniform grid shared by all drones.
struct GroundTruth {
  double dt = 0.01;
  std::vector<std::vector<Pose4>> poses;  // [drone][sample]

  std::size_t num_drones() const { return poses.size(); }
  std::size_t num_samples() const { return poses.empty() ? 0 : poses.front().size(); }
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

/// Detections of one step together with the hidden identities used only for
/// scoring (-1 marks clutter). The labels never reach the estimator.
struct DetectionBatch {
  std::vector<DetectionMeas> detections;
  std::vector<DroneId> truth_targets;
};

/// Everything the swarm's sensors produce at one grid time.
struct MeasurementFrame {
  double t = 0.0;
  std::vector<VioMeas> vio;  // indexed by drone id
  std::vector<DistanceMeas> distances;
  std::vector<DetectionMeas> detections;
  std::vector<DroneId> detection_truth;
};

/// Independent random streams; every (seed, stream, index) triple gives its
/// own engine so that drones and steps never share draws.
enum class NoiseStream : std::uint32_t { kVio = 1, kRange = 2, kDetection = 3 };
std::mt19937_64 make_engine(std::uint64_t seed, NoiseStream stream, std::uint64_t index);

GroundTruth sample_truth(const std::vector<TrajectorySpec>& specs, double dt, double duration);

/// Noisy odometry for one drone: element 0 is the identity anchor, element k
/// carries z_delta = boxplus(true body-frame delta, noise) and the running
/// composition of those deltas.
std::vector<VioMeas> gen_vio(const std::vector<Pose4>& truth, DroneId drone,
                             const NoiseConfig& noise);

/// One range per unordered pair at sample k, each independently dropped.
std::vector<DistanceMeas> gen_distances(const GroundTruth& truth, const NoiseConfig& noise,
                                        std::size_t k);

/// True iff rel (body frame) lies inside the forward cone and range limit.
bool in_field_of_view(const Eigen::Vector3d& rel, const NoiseConfig& noise);

DetectionBatch gen_detections(const GroundTruth& truth, const NoiseConfig& noise,
                              std::size_t k);

/// Runs all generators over the full grid.
std::vector<MeasurementFrame> simulate_measurements(const GroundTruth& truth,
                                                    const NoiseConfig& noise);

}  // namespace swarmloc
