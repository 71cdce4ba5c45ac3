#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "swarmloc/estimator.hpp"
#include "swarmloc/simworld.hpp"

namespace swarmloc {

/// One line of the estimate log.
struct EstimateRecord {
  double t = 0.0;
  DroneId observer = 0;
  DroneId target = 0;
  Pose4 pose;
  double staleness = 0.0;
  bool initialized = false;
};

/// One record per target of the estimate, the observer itself excluded.
std::vector<EstimateRecord> flatten(const SwarmEstimate& estimate);

// Line-delimited JSON, one object per line. Readers throw
// std::runtime_error with the offending line number on malformed input.

void write_estimates(std::ostream& out, std::span<const EstimateRecord> records);
std::vector<EstimateRecord> read_estimates(std::istream& in);

/// Measurement frames without the hidden detection identities.
void write_measurements(std::ostream& out, std::span<const MeasurementFrame> frames);
std::vector<MeasurementFrame> read_measurements(std::istream& in);

/// Header line {dt, drones} followed by one line per sample.
void write_truth(std::ostream& out, const GroundTruth& truth);
GroundTruth read_truth(std::istream& in);

/// Dump of one window and its solved poses, for debugging and plots.
void write_window_snapshot(std::ostream& out, DroneId observer, const SlidingWindow& window,
                           const SwarmState& state);

}  // namespace swarmloc
