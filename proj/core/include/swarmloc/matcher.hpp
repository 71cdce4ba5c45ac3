#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "swarmloc/measurements.hpp"

namespace swarmloc {

enum class OutlierReason { kGate, kSize, kAmbiguous };

std::string_view to_string(OutlierReason reason);

struct Assignment {
  std::size_t detection_index = 0;
  DetectionMeas detection;
  DroneId target = 0;
  double disparity = 0.0;  // meters
};

struct Outlier {
  std::size_t detection_index = 0;
  DetectionMeas detection;
  OutlierReason reason = OutlierReason::kGate;
};

/// Every input detection appears exactly once, either assigned or rejected.
struct MatchResult {
  std::vector<Assignment> assignments;
  std::vector<Outlier> outliers;

  std::optional<DroneId> target_of(std::size_t detection_index) const;
  double total_disparity() const;
};

struct MatchParams {
  double gate = 0.5;       // meters; pairs at or beyond this never match
  double size_tol = 0.5;   // allowed relative error of the re-projected size
  double drone_size = 0.3; // meters
  /// A detection whose runner-up target is within this margin of the chosen
  /// one is rejected as ambiguous. Zero disables the check.
  double ambiguity_margin = 0.02;
};

/// Minimum-cost assignment for a rows <= cols cost matrix; returns the column
/// chosen for each row. Exact ties resolve to the lower column index.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Size of the drone implied by a detection: apparent size times range.
double reprojected_size(const DetectionMeas& d);

/// Labels anonymous detections of one observer against predicted target
/// positions in that observer's body frame. Among gated pairs the result
/// matches as many detections as possible and then minimizes the summed
/// disparity.
MatchResult match(std::span<const DetectionMeas> detections,
                  const std::map<DroneId, Eigen::Vector3d>& predicted,
                  const MatchParams& params);

enum class TrackDecision { kKeep, kRematch };

/// Tracking continuity check between the previous labeled frame and a new
/// detection frame. Keep holds when every previous track has a mutually
/// nearest new detection within overlap_thresh * gate of its last position
/// and no new detection is left unclaimed.
TrackDecision validate_track(const MatchResult& previous,
                             std::span<const DetectionMeas> detections, double overlap_thresh,
                             double gate);

/// Target ids carried over from `previous` onto `detections` by mutual
/// nearest neighbour; only meaningful after validate_track returned kKeep.
std::vector<std::optional<DroneId>> carry_labels(const MatchResult& previous,
                                                 std::span<const DetectionMeas> detections);

}  // namespace swarmloc
