#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "swarmloc/geometry.hpp"
#include "swarmloc/measurements.hpp"
#include "swarmloc/netlink.hpp"

namespace swarmloc {

/// Measurements and odometry of the whole swarm at one stamp, as seen by
/// one estimator instance. Drones whose packets were lost are simply absent.
struct Frame {
  double t = 0.0;
  std::map<DroneId, Pose4> vio;
  std::map<DronePair, double> distances;
  std::vector<DetectionMeas> detections;
  /// Identity assigned to each detection by the matcher; parallel to
  /// detections, empty optional while unlabeled or rejected.
  std::vector<std::optional<DroneId>> labels;

  bool has_drone(DroneId id) const { return vio.contains(id); }
  std::optional<DroneId> label(std::size_t i) const {
    return i < labels.size() ? labels[i] : std::nullopt;
  }
};

/// Merges packets that share one stamp. A distance pair reported twice keeps
/// the later packet's value.
Frame assemble(double t, std::span<const Packet> packets);

/// Buffers incoming packets per stamp and releases complete frames.
class FrameAssembler {
 public:
  explicit FrameAssembler(double period) : period_(period) {}

  void add(const Packet& packet);

  /// Frames with stamp <= up_to, in stamp order. Packets that arrive for an
  /// already released stamp are discarded and counted.
  std::vector<Frame> pop_ready(double up_to);

  std::uint64_t late_packets() const { return late_packets_; }

 private:
  std::int64_t key(double stamp) const;

  double period_;
  std::map<std::int64_t, std::vector<Packet>> pending_;
  std::optional<std::int64_t> last_released_;
  std::uint64_t late_packets_ = 0;
};

struct KeyframeParams {
  double td0 = 0.5;  // meters
  double td1 = 0.1;  // meters, only with a detection involving the observer

  /// Throws std::invalid_argument unless 0 < td1 < td0.
  void validate() const;
};

enum class KeyframeReason {
  kNone,
  kFirstOrNewDrone,
  kDisplacementTd0,
  kDisplacementTd1WithDetection,
};

std::string_view to_string(KeyframeReason reason);

struct KeyframeDecision {
  bool keyframe = false;
  KeyframeReason reason = KeyframeReason::kNone;
};

/// Chronological keyframes, bounded in size. Oldest keyframes are evicted
/// without marginalization.
class SlidingWindow {
 public:
  static constexpr std::size_t kDefaultMaxSize = 50;

  explicit SlidingWindow(std::size_t max_size = kDefaultMaxSize);

  /// Appends a keyframe and returns the evicted one, if any. Throws
  /// std::invalid_argument unless kf.t is after the last keyframe.
  std::optional<Frame> push(Frame kf);

  std::size_t size() const { return keyframes_.size(); }
  bool empty() const { return keyframes_.empty(); }
  std::size_t max_size() const { return max_size_; }
  const Frame& operator[](std::size_t i) const { return keyframes_[i]; }
  Frame& operator[](std::size_t i) { return keyframes_[i]; }
  const Frame& front() const { return keyframes_.front(); }
  const Frame& back() const { return keyframes_.back(); }
  const std::deque<Frame>& keyframes() const { return keyframes_; }

  bool contains_drone(DroneId id) const;
  std::vector<DroneId> drones() const;

  /// Index of the closest earlier keyframe holding odometry of `id`.
  std::optional<std::size_t> previous_with(DroneId id, std::size_t index) const;

  /// Odometry increment of `id` from its previous keyframe to `index`:
  /// relative(vio at previous, vio at index). The first surviving keyframe
  /// after an eviction has no predecessor and starts a new chain.
  std::optional<Pose4> vio_delta(DroneId id, std::size_t index) const;

  /// Sum of odometry displacements of `id` between consecutive keyframes.
  double path_length(DroneId id) const;

 private:
  std::size_t max_size_;
  std::deque<Frame> keyframes_;
};

/// Keyframe test for the frame as seen by `observer`: first frame or a new
/// drone, displacement > td0, or displacement > td1 together with a
/// detection made by or labeled as the observer.
KeyframeDecision is_keyframe(const Frame& frame, const SlidingWindow& window,
                             const KeyframeParams& params, DroneId observer);

struct HoverThresholds {
  double translation = 0.05;                    // meters
  double yaw = 2.0 * 3.14159265358979323846 / 180.0;  // radians
};

/// Result of hover detection over a window. A drone other than the observer
/// hovers at a keyframe when its odometry is within both thresholds of the
/// first keyframe of its current run; such keyframes share that run's pose
/// variable ("slot") and the odometry residuals inside vanish.
/// Distance residuals between two hovering drones other than the observer
/// are dropped.
struct PruningPlan {
  std::vector<DroneId> drones;             // sorted; index into the tables below
  std::vector<std::vector<int>> slot;      // [drone][keyframe], -1 if no odometry
  std::vector<std::vector<bool>> hovering; // [drone][keyframe]
  int num_slots = 0;

  std::set<std::pair<DronePair, std::size_t>> dropped_distances;  // (pair, keyframe)
  std::set<std::pair<DroneId, std::size_t>> dropped_vio;          // (drone, interval end keyframe)

  std::size_t variables_before = 0;  // 4 per (drone, keyframe) with odometry
  std::size_t variables_after = 0;   // 4 per slot
  std::size_t distance_residuals_before = 0;
  std::size_t distance_residuals_after = 0;
  std::size_t vio_residuals_before = 0;
  std::size_t vio_residuals_after = 0;

  std::optional<std::size_t> drone_index(DroneId id) const;
  int slot_of(DroneId id, std::size_t keyframe) const;
  bool is_hovering(DroneId id, std::size_t keyframe) const;
  bool distance_dropped(DronePair pair, std::size_t keyframe) const {
    return dropped_distances.contains({pair, keyframe});
  }
  bool vio_dropped(DroneId id, std::size_t keyframe) const {
    return dropped_vio.contains({id, keyframe});
  }
  bool empty() const { return dropped_distances.empty() && dropped_vio.empty(); }
};

/// With `enabled` false the plan only carries the unpruned layout and counts.
PruningPlan annotate_hover_and_prune(const SlidingWindow& window, DroneId observer,
                                     const HoverThresholds& thresholds, bool enabled = true);

}  // namespace swarmloc
