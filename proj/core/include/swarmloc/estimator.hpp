#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string_view>
#include <vector>

#include "swarmloc/framing.hpp"
#include "swarmloc/geometry.hpp"
#include "swarmloc/matcher.hpp"
#include "swarmloc/measurements.hpp"
#include "swarmloc/netlink.hpp"
#include "swarmloc/nls.hpp"

namespace swarmloc {

/// Inverse standard deviations of the three measurement families. The
/// odometry sigmas are per odometry step; an increment spanning N steps is
/// weighted by 1 / (sigma sqrt(N)).
struct MeasurementWeights {
  double sigma_d = 0.1;
  double sigma_det = 0.05;
  double sigma_vio_t = 0.005;
  double sigma_vio_yaw = 0.001;
  double vio_step = 0.01;  // seconds per odometry step

  double distance() const { return 1.0 / sigma_d; }
  double detection() const { return 1.0 / sigma_det; }
  double vio_translation(double span) const;
  double vio_yaw(double span) const;
};

/// Which measurement families enter the sliding-window problem.
struct ResidualFamilies {
  bool distance = true;
  bool detection = true;
  bool vio = true;
};

/// Poses of every drone in the observer's odometry frame, per keyframe time.
struct SwarmState {
  std::map<DroneId, std::map<double, Pose4>> poses;
  std::set<DroneId> initialized;

  std::optional<Pose4> pose(DroneId id, double t) const;
  bool is_initialized(DroneId id) const { return initialized.contains(id); }
};

/// Which drones take part in a problem. The observer is always present and
/// anchored at its own odometry; fixed drones are held at their state poses.
struct ProblemSpec {
  DroneId observer = 0;
  std::set<DroneId> free_drones;
  std::set<DroneId> fixed_drones;
  ResidualFamilies families;
  MeasurementWeights weights;
};

struct BuiltProblem {
  nls::Problem problem;
  /// [drone][keyframe] -> variable index, -1 where the drone has no pose.
  std::map<DroneId, std::vector<int>> variable_of;
  /// Drones (other than fixed ones) touched by each residual block.
  std::vector<std::vector<DroneId>> block_drones;

  int distance_blocks = 0;
  int detection_blocks = 0;
  int vio_blocks = 0;
  int state_variables = 0;  // 4 per pose slot, observer included
  int free_variables = 0;   // 4 per free slot

  int residual_blocks() const { return distance_blocks + detection_blocks + vio_blocks; }
};

/// Initial value of a drone at a keyframe: its state pose if present,
/// otherwise the nearest state pose carried over by the odometry increment.
std::optional<Pose4> seed_pose(const SlidingWindow& window, const SwarmState& state, DroneId id,
                               std::size_t keyframe);

/// Emits distance, detection and odometry residuals over the window minus
/// the pruned terms. Blocks whose variables are all fixed are skipped.
BuiltProblem build_problem(const SlidingWindow& window, const PruningPlan& plan,
                           const ProblemSpec& spec, const SwarmState& state);

/// Residuals of build_problem evaluated at `state`.
Eigen::VectorXd evaluate_residuals(const SlidingWindow& window, const PruningPlan& plan,
                                   const ProblemSpec& spec, const SwarmState& state);

/// Writes solved values back into `state` for every free drone.
void store_solution(const BuiltProblem& built, const SlidingWindow& window,
                    const std::set<DroneId>& drones, SwarmState& state);

struct InitParams {
  int trials = 10;
  double min_observer_path = 1.0;  // meters of observer motion in the window
  double gate_factor = 9.0;        // max mean squared weighted residual
  int min_distances = 3;
  double magnitude_spread = 0.1;   // relative spread around the measured range
  /// A trial whose cost is within this chi-square margin of the best one
  /// but whose final pose disagrees with it makes the result ambiguous.
  double ambiguity_chi2 = 25.0;
  double agree_translation = 0.3;  // meters
  double agree_yaw = 0.1;          // radians
  /// Observability check on the winner: standard deviations of the target's
  /// newest ranged pose from the Gauss-Newton covariance.
  double max_sigma_translation = 0.5;  // meters, sqrt of the trace
  double max_sigma_yaw = 0.1;          // radians
  /// When set, each trial also labels the unlabeled detections its solution
  /// explains and is refined with them; trials explaining more detections
  /// win.
  std::optional<MatchParams> association;
  /// With association, up to this many extra trials start at the target
  /// position implied by a recent observer detection.
  int detection_seeds = 5;
  nls::SolverOptions solver{.max_iterations = 100};
};

enum class InitStatus {
  kReady,
  kInsufficientMotion,
  kNoDistances,
  kCostGate,
  kAmbiguous,
  kUncertain,
};

std::string_view to_string(InitStatus status);

struct InitResult {
  InitStatus status = InitStatus::kNoDistances;
  std::map<double, Pose4> poses;  // keyframe time -> pose of the target
  /// Keyframe time -> detection labels after tentative association; empty
  /// when no detection was associated.
  std::map<double, std::vector<std::optional<DroneId>>> labels;
  double cost = 0.0;
  double mean_sq_residual = 0.0;
  double sigma_translation = 0.0;
  double sigma_yaw = 0.0;
  int trials_run = 0;
};

/// Random-restart initialization of one target against the observer and the
/// already initialized drones (held fixed). Each random trial starts with yaw 0
/// and the target placed at a random direction from the drone it last ranged
/// with, at roughly the measured range.
///
/// With `params.association` set, recent observer detections add seeded
/// trials, and every trial labels the detections its trajectory explains and
/// re-solves with them. The trial explaining the most detections wins, then
/// the lowest cost. The result is refused when its cost is too high, when a
/// distinct solution fits about as well, or when its covariance is too wide.
InitResult initialize_target(const SlidingWindow& window, const PruningPlan& plan,
                             DroneId observer, DroneId target, const SwarmState& state,
                             const MeasurementWeights& weights, const InitParams& params,
                             std::mt19937_64& rng);

struct EstimatorConfig {
  std::size_t window_size = SlidingWindow::kDefaultMaxSize;
  KeyframeParams keyframe;
  HoverThresholds hover;
  bool enable_pruning = true;
  ResidualFamilies families;
  MeasurementWeights weights;
  MatchParams match;
  double overlap_thresh = 0.5;
  double max_match_staleness = 1.0;  // seconds; staler targets are not matched
  InitParams init;
  int divergence_strikes = 3;
  nls::SolverOptions solver{.max_iterations = 20, .step_tolerance = 1e-9};
  double period = 0.01;  // frame period, seconds
  std::uint64_t seed = 11;

  void validate() const;
};

struct TargetEstimate {
  DroneId target = 0;
  Pose4 relative;          // target pose in the observer's body frame
  double staleness = 0.0;  // seconds since its newest optimized keyframe
  bool initialized = false;
};

struct SwarmEstimate {
  double t = 0.0;
  DroneId observer = 0;
  std::vector<TargetEstimate> targets;  // includes the observer itself (identity)

  const TargetEstimate* find(DroneId id) const;
};

struct SolveRecord {
  double t = 0.0;
  nls::SolveReport report;
  int state_variables = 0;
  int free_variables = 0;
  int residual_blocks = 0;
  PruningPlan plan;
};

/// Inputs and outcome of labeling one detector's detections in one frame.
struct MatchRecord {
  double t = 0.0;
  DroneId detector = 0;
  std::vector<DetectionMeas> detections;
  std::map<DroneId, Eigen::Vector3d> predicted;
  MatchResult result;
  bool tracked = false;  // labels carried by track validation
};

/// One decentralized estimator instance. It sees only packets, assembles
/// frames, labels detections, selects keyframes and solves the window.
class RelativeEstimator {
 public:
  RelativeEstimator(DroneId self, EstimatorConfig config);

  DroneId self() const { return self_; }
  const EstimatorConfig& config() const { return config_; }

  void ingest(const Packet& packet);

  /// Processes every buffered frame with stamp <= up_to.
  std::vector<SwarmEstimate> advance(double up_to);

  /// Runs one frame through labeling, keyframe selection, optimization and
  /// prediction, returning the high-rate estimate at frame.t.
  SwarmEstimate process(Frame frame);

  /// Prediction at time t from the newest odometry of every drone composed
  /// onto its latest optimized keyframe pose.
  SwarmEstimate predict(double t) const;

  const SlidingWindow& window() const { return window_; }
  const SwarmState& state() const { return state_; }
  const std::vector<SolveRecord>& solve_log() const { return solve_log_; }
  std::uint64_t late_packets() const { return assembler_.late_packets(); }

  void set_match_hook(std::function<void(const MatchRecord&)> hook) { match_hook_ = std::move(hook); }
  void set_record_solves(bool on) { record_solves_ = on; }

 private:
  struct Anchor {
    double t = 0.0;
    Pose4 pose;  // optimized, observer odometry frame
    Pose4 vio;   // the target's own odometry at that keyframe
  };

  void label_detections(Frame& frame);
  std::optional<Pose4> predicted_pose(DroneId id) const;
  void update();
  void refresh_anchors();
  void forget_evicted();

  DroneId self_;
  EstimatorConfig config_;
  FrameAssembler assembler_;
  SlidingWindow window_;
  SwarmState state_;
  std::map<DroneId, Anchor> anchors_;
  std::map<DroneId, std::pair<double, Pose4>> latest_vio_;
  std::map<DroneId, MatchResult> last_match_;
  std::map<DroneId, int> strikes_;
  std::vector<SolveRecord> solve_log_;
  std::mt19937_64 rng_;
  std::function<void(const MatchRecord&)> match_hook_;
  bool record_solves_ = true;
};

}  // namespace swarmloc
