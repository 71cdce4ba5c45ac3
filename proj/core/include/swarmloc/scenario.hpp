#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmloc/estimator.hpp"
#include "swarmloc/netlink.hpp"
#include "swarmloc/simworld.hpp"

namespace swarmloc {

/// A drone whose radio goes silent from `at` on: no packets, no ranges, and
/// its own estimator stops.
struct Failure {
  DroneId drone = 0;
  double at = 0.0;
};

struct ExperimentConfig {
  std::string name = "scenario";
  std::vector<TrajectorySpec> trajectories;  // one per drone, id = index
  double dt = 0.01;
  double duration = 30.0;
  NoiseConfig noise;
  LinkModel link;
  EstimatorConfig estimator;
  std::vector<Failure> failures;
  std::vector<std::uint64_t> seeds{1};
  std::vector<DroneId> observers;  // drones running an estimator; empty means all
  bool use_uwb = true;
  bool use_detection = true;
  double log_period = 0.1;  // seconds between logged estimates
  std::string output_dir = "out";

  std::size_t num_drones() const { return trajectories.size(); }
  std::vector<DroneId> active_observers() const;

  /// Throws std::invalid_argument describing the first problem found.
  void validate() const;
};

/// Parses a JSON scenario. Missing keys keep their defaults; unknown keys
/// are rejected. Throws std::invalid_argument on bad content.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& config);

/// Estimator settings as used by a run: families from the ablation flags,
/// frame period and odometry step from dt.
EstimatorConfig effective_estimator(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace swarmloc
