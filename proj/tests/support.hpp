#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <string>
#include <vector>

#include "swarmloc/framing.hpp"
#include "swarmloc/scenario.hpp"
#include "swarmloc/simworld.hpp"

namespace swarmloc::testing {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(SWARMLOC_SCENARIO_DIR) / (name + ".json");
}

inline ExperimentConfig scenario(const std::string& name) {
  return load_config(scenario_path(name).string());
}

// A simulated step as the estimator would assemble it from a loss-free link.
inline Frame to_frame(const MeasurementFrame& m) {
  Frame f;
  f.t = m.t;
  for (std::size_t i = 0; i < m.vio.size(); ++i) f.vio[static_cast<DroneId>(i)] = m.vio[i].pose;
  for (const DistanceMeas& d : m.distances) f.distances[d.pair] = d.range;
  f.detections = m.detections;
  f.labels.resize(f.detections.size());
  return f;
}

inline void zero_noise(ExperimentConfig& c) {
  c.noise.sigma_d = c.noise.sigma_det = c.noise.sigma_vio_t = c.noise.sigma_vio_yaw = 0.0;
}

inline double path_length(const GroundTruth& truth, DroneId id) {
  double s = 0.0;
  const auto& p = truth.poses.at(static_cast<std::size_t>(id));
  for (std::size_t k = 1; k < p.size(); ++k) s += (p[k].t - p[k - 1].t).norm();
  return s;
}

}  // namespace swarmloc::testing
