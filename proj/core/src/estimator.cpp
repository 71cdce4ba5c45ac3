#include "swarmloc/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "swarmloc/residuals.hpp"

namespace swarmloc {

double MeasurementWeights::vio_translation(double span) const {
  return 1.0 / (sigma_vio_t * std::sqrt(std::max(1.0, span / vio_step)));
}

double MeasurementWeights::vio_yaw(double span) const {
  return 1.0 / (sigma_vio_yaw * std::sqrt(std::max(1.0, span / vio_step)));
}

std::optional<Pose4> SwarmState::pose(DroneId id, double t) const {
  auto d = poses.find(id);
  if (d == poses.end()) return std::nullopt;
  auto p = d->second.find(t);
  if (p == d->second.end()) return std::nullopt;
  return p->second;
}

std::optional<Pose4> seed_pose(const SlidingWindow& window, const SwarmState& state, DroneId id,
                               std::size_t keyframe) {
  const Frame& here = window[keyframe];
  if (auto p = state.pose(id, here.t)) return p;
  auto vio_here = here.vio.find(id);
  if (vio_here == here.vio.end()) return std::nullopt;

  // Nearest keyframe (earlier first on ties) that has both a state pose and
  // odometry for the drone.
  const std::size_t m = window.size();
  for (std::size_t offset = 1; offset < m; ++offset) {
    for (int sign : {-1, +1}) {
      const auto b = static_cast<std::ptrdiff_t>(keyframe) + sign * static_cast<std::ptrdiff_t>(offset);
      if (b < 0 || b >= static_cast<std::ptrdiff_t>(m)) continue;
      const Frame& there = window[static_cast<std::size_t>(b)];
      auto vio_there = there.vio.find(id);
      if (vio_there == there.vio.end()) continue;
      if (auto p = state.pose(id, there.t)) {
        return compose(*p, relative(vio_there->second, vio_here->second));
      }
    }
  }
  return std::nullopt;
}

BuiltProblem build_problem(const SlidingWindow& window, const PruningPlan& plan,
                           const ProblemSpec& spec, const SwarmState& state) {
  BuiltProblem out;
  const std::size_t m = window.size();

  std::set<DroneId> involved = spec.free_drones;
  involved.insert(spec.fixed_drones.begin(), spec.fixed_drones.end());
  involved.insert(spec.observer);

  auto is_fixed = [&](DroneId id) {
    return id == spec.observer || spec.fixed_drones.contains(id);
  };

  for (DroneId id : involved) {
    std::vector<int>& vars = out.variable_of[id];
    vars.assign(m, -1);
    if (!plan.drone_index(id)) continue;
    std::map<int, int> var_of_slot;
    for (std::size_t a = 0; a < m; ++a) {
      const int slot = plan.slot_of(id, a);
      if (slot < 0) continue;
      if (auto it = var_of_slot.find(slot); it != var_of_slot.end()) {
        vars[a] = it->second;
        continue;
      }
      std::optional<Pose4> value;
      if (id == spec.observer) {
        value = window[a].vio.at(id);
      } else {
        value = seed_pose(window, state, id, a);
      }
      if (!value) continue;
      const bool fixed = is_fixed(id);
      const int var = out.problem.add_variable(*value, fixed);
      var_of_slot[slot] = var;
      vars[a] = var;
      out.state_variables += nls::kBlockSize;
      if (!fixed) out.free_variables += nls::kBlockSize;
    }
  }

  auto var = [&](DroneId id, std::size_t a) {
    auto it = out.variable_of.find(id);
    return it == out.variable_of.end() ? -1 : it->second[a];
  };
  auto free_of = [&](std::initializer_list<DroneId> ids) {
    std::vector<DroneId> f;
    for (DroneId id : ids) {
      if (!is_fixed(id)) f.push_back(id);
    }
    return f;
  };

  const MeasurementWeights& w = spec.weights;
  if (spec.families.distance) {
    for (std::size_t a = 0; a < m; ++a) {
      for (const auto& [pair, range] : window[a].distances) {
        if (plan.distance_dropped(pair, a)) continue;
        const int vi = var(pair.first, a);
        const int vj = var(pair.second, a);
        if (vi < 0 || vj < 0) continue;
        if (is_fixed(pair.first) && is_fixed(pair.second)) continue;
        out.problem.emplace_residual<DistanceResidual>(vi, vj, range, w.distance());
        out.block_drones.push_back(free_of({pair.first, pair.second}));
        ++out.distance_blocks;
      }
    }
  }

  if (spec.families.detection) {
    for (std::size_t a = 0; a < m; ++a) {
      const Frame& f = window[a];
      for (std::size_t i = 0; i < f.detections.size(); ++i) {
        const auto target = f.label(i);
        if (!target) continue;
        const DroneId detector = f.detections[i].observer;
        if (detector == *target) continue;
        const int vo = var(detector, a);
        const int vt = var(*target, a);
        if (vo < 0 || vt < 0) continue;
        if (is_fixed(detector) && is_fixed(*target)) continue;
        out.problem.emplace_residual<DetectionResidual>(vo, vt, f.detections[i].rel_t,
                                                        w.detection());
        out.block_drones.push_back(free_of({detector, *target}));
        ++out.detection_blocks;
      }
    }
  }

  if (spec.families.vio) {
    for (DroneId id : spec.free_drones) {
      for (std::size_t a = 0; a < m; ++a) {
        const int vb = var(id, a);
        if (vb < 0) continue;
        const auto prev = window.previous_with(id, a);
        if (!prev) continue;
        const int va = var(id, *prev);
        if (va < 0 || va == vb) continue;
        const double span = window[a].t - window[*prev].t;
        const Pose4 delta = relative(window[*prev].vio.at(id), window[a].vio.at(id));
        out.problem.emplace_residual<VioResidual>(va, vb, delta, w.vio_translation(span),
                                                  w.vio_yaw(span));
        out.block_drones.push_back({id});
        ++out.vio_blocks;
      }
    }
  }
  return out;
}

Eigen::VectorXd evaluate_residuals(const SlidingWindow& window, const PruningPlan& plan,
                                   const ProblemSpec& spec, const SwarmState& state) {
  return build_problem(window, plan, spec, state).problem.residual_vector();
}

void store_solution(const BuiltProblem& built, const SlidingWindow& window,
                    const std::set<DroneId>& drones, SwarmState& state) {
  for (DroneId id : drones) {
    auto it = built.variable_of.find(id);
    if (it == built.variable_of.end()) continue;
    for (std::size_t a = 0; a < it->second.size(); ++a) {
      const int v = it->second[a];
      if (v >= 0) state.poses[id][window[a].t] = built.problem.value(v);
    }
  }
}

std::string_view to_string(InitStatus status) {
  switch (status) {
    case InitStatus::kReady: return "ready";
    case InitStatus::kInsufficientMotion: return "insufficient-motion";
    case InitStatus::kNoDistances: return "no-distances";
    case InitStatus::kCostGate: return "cost-gate";
    case InitStatus::kAmbiguous: return "ambiguous";
    case InitStatus::kUncertain: return "uncertain";
  }
  return "unknown";
}

namespace {

struct TrialOutcome {
  double cost = 0.0;
  int scalars = 0;
  int associated = 0;
  std::map<double, Pose4> poses;
  std::map<double, std::vector<std::optional<DroneId>>> labels;
  Pose4 ref_pose;
  Eigen::Matrix4d cov = Eigen::Matrix4d::Constant(std::numeric_limits<double>::infinity());
  bool cov_ok = false;
};

std::map<double, std::vector<std::optional<DroneId>>> labels_of(const SlidingWindow& window) {
  std::map<double, std::vector<std::optional<DroneId>>> out;
  for (std::size_t a = 0; a < window.size(); ++a) out[window[a].t] = window[a].labels;
  return out;
}

// Whether the length of a detection singles out `seen` among the drones the
// detector ranged with in the same frame: it must agree with the range to
// `seen` (when there is one) and with no other range.
bool range_consistent(const Frame& f, const DetectionMeas& d, DroneId seen, double tolerance) {
  const double length = d.rel_t.norm();
  for (const auto& [pair, range] : f.distances) {
    if (!pair.involves(d.observer)) continue;
    const bool agrees = std::abs(length - range) <= tolerance;
    if (agrees != (pair.other(d.observer) == seen)) return false;
  }
  return true;
}

// Labels the unlabeled detections that a candidate target trajectory
// explains: the observer or an initialized drone seeing the target, or the
// target seeing the observer. Returns the number of labels written.
int associate_tentatively(SlidingWindow& window, DroneId observer, DroneId target,
                          const std::map<double, Pose4>& target_poses, const SwarmState& state,
                          const std::set<DroneId>& fixed, const MatchParams& match,
                          double range_tolerance) {
  int count = 0;
  for (std::size_t a = 0; a < window.size(); ++a) {
    Frame& f = window[a];
    auto tp = target_poses.find(f.t);
    if (tp == target_poses.end()) continue;
    f.labels.resize(f.detections.size());
    for (std::size_t i = 0; i < f.detections.size(); ++i) {
      const DetectionMeas& d = f.detections[i];
      if (f.labels[i] && *f.labels[i] != target && d.observer != target) continue;
      f.labels[i].reset();
      if (!(std::abs(reprojected_size(d) / match.drone_size - 1.0) <= match.size_tol)) continue;
      std::optional<Eigen::Vector3d> predicted;
      DroneId label = target;
      if (d.observer == observer) {
        predicted = relative(f.vio.at(observer), tp->second).t;
      } else if (d.observer == target) {
        predicted = relative(tp->second, f.vio.at(observer)).t;
        label = observer;
      } else if (fixed.contains(d.observer)) {
        if (auto p = state.pose(d.observer, f.t)) predicted = relative(*p, tp->second).t;
      }
      if (predicted && (d.rel_t - *predicted).norm() < match.gate &&
          range_consistent(f, d, label == observer ? observer : target, range_tolerance)) {
        f.labels[i] = label;
        ++count;
      }
    }
  }
  return count;
}

}  // namespace

InitResult initialize_target(const SlidingWindow& window, const PruningPlan& plan,
                             DroneId observer, DroneId target, const SwarmState& state,
                             const MeasurementWeights& weights, const InitParams& params,
                             std::mt19937_64& rng) {
  InitResult result;
  if (!(window.path_length(observer) > params.min_observer_path)) {
    result.status = InitStatus::kInsufficientMotion;
    return result;
  }

  std::set<DroneId> fixed;
  for (DroneId id : state.initialized) {
    if (id != target && id != observer) fixed.insert(id);
  }

  // Most recent range between the target and a drone with a known pose.
  int n_ranges = 0;
  std::optional<std::size_t> ref_kf;
  Eigen::Vector3d ref_center = Eigen::Vector3d::Zero();
  double ref_range = 0.0;
  for (std::size_t a = 0; a < window.size(); ++a) {
    const Frame& f = window[a];
    if (!f.has_drone(target)) continue;
    for (const auto& [pair, range] : f.distances) {
      if (!pair.involves(target)) continue;
      const DroneId other = pair.other(target);
      std::optional<Pose4> other_pose;
      if (other == observer) {
        if (f.has_drone(observer)) other_pose = f.vio.at(observer);
      } else if (fixed.contains(other)) {
        other_pose = state.pose(other, f.t);
      }
      if (!other_pose) continue;
      ++n_ranges;
      ref_kf = a;
      ref_center = other_pose->t;
      ref_range = range;
    }
  }
  if (n_ranges == 0 || n_ranges < params.min_distances) {
    result.status = InitStatus::kNoDistances;
    return result;
  }

  ProblemSpec spec;
  spec.observer = observer;
  spec.free_drones = {target};
  spec.fixed_drones = fixed;
  spec.families = ResidualFamilies{.distance = true, .detection = false, .vio = true};
  spec.weights = weights;

  SwarmState guess;
  guess.initialized = state.initialized;
  for (DroneId id : fixed) {
    if (auto it = state.poses.find(id); it != state.poses.end()) guess.poses[id] = it->second;
  }

  // Solves from the target trajectory currently in `guess`; returns the
  // outcome or nullopt when the solve diverged.
  auto solve_from = [&](const SlidingWindow& w, const ProblemSpec& sp) -> std::optional<TrialOutcome> {
    BuiltProblem built = build_problem(w, plan, sp, guess);
    if (built.residual_blocks() == 0 || built.free_variables == 0) return std::nullopt;
    const nls::SolveReport report = nls::solve(built.problem, params.solver);
    if (report.termination == nls::Termination::kDiverged) return std::nullopt;
    TrialOutcome out;
    out.cost = report.final_cost;
    out.scalars = built.problem.num_residual_scalars();
    const auto& vars = built.variable_of.at(target);
    for (std::size_t a = 0; a < vars.size(); ++a) {
      if (vars[a] >= 0) out.poses[w[a].t] = built.problem.value(vars[a]);
    }
    const int ref_var = vars[*ref_kf];
    if (ref_var < 0) return std::nullopt;
    out.ref_pose = built.problem.value(ref_var);
    if (auto cov = nls::marginal_covariance(built.problem, ref_var)) {
      out.cov = *cov;
      out.cov_ok = true;
    }
    return out;
  };

  const Pose4 ref_vio = window[*ref_kf].vio.at(target);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  // Extra starts at the newest observer detections whose range agrees with
  // the target's range at that keyframe. Without a detection back, the
  // target keeps its odometry yaw, like the random starts.
  std::vector<Pose4> seeded_offsets;
  const double range_tolerance =
      3.0 * std::hypot(weights.sigma_d, weights.sigma_det);
  if (params.association) {
    const MatchParams& mp = *params.association;
    for (std::size_t a = window.size(); a-- > 0 &&
                                        static_cast<int>(seeded_offsets.size()) < params.detection_seeds;) {
      const Frame& f = window[a];
      auto range = f.distances.find(DronePair(observer, target));
      if (range == f.distances.end() || !f.has_drone(target)) continue;
      for (std::size_t i = 0; i < f.detections.size(); ++i) {
        const DetectionMeas& d = f.detections[i];
        if (d.observer != observer || (f.label(i) && *f.label(i) != target)) continue;
        if (!(std::abs(reprojected_size(d) / mp.drone_size - 1.0) <= mp.size_tol)) continue;
        if (!range_consistent(f, d, target, range_tolerance)) continue;
        const Eigen::Vector3d p = transform_point(f.vio.at(observer), d.rel_t);
        // A detection of the observer by the target in the same keyframe
        // fixes the target's yaw as well.
        double yaw = f.vio.at(target).yaw();
        for (const DetectionMeas& back : f.detections) {
          if (back.observer != target) continue;
          if (!(std::abs(reprojected_size(back) / mp.drone_size - 1.0) <= mp.size_tol)) continue;
          if (!range_consistent(f, back, observer, range_tolerance)) continue;
          const Eigen::Vector3d to_observer = f.vio.at(observer).t - p;
          yaw = std::atan2(to_observer.y(), to_observer.x()) -
                std::atan2(back.rel_t.y(), back.rel_t.x());
          break;
        }
        seeded_offsets.push_back(compose(Pose4(p, yaw), inverse(f.vio.at(target))));
        break;
      }
    }
  }

  std::vector<TrialOutcome> outcomes;
  const int n_trials = params.trials + static_cast<int>(seeded_offsets.size());
  for (int trial = 0; trial < n_trials; ++trial) {
    Pose4 frame_offset;
    if (trial < params.trials) {
      Eigen::Vector3d dir(gauss(rng), gauss(rng), gauss(rng));
      if (dir.norm() < 1e-12) dir = Eigen::Vector3d::UnitX();
      dir.normalize();
      const double magnitude = ref_range * (1.0 + params.magnitude_spread * unif(rng));
      frame_offset = Pose4(ref_center + magnitude * dir - ref_vio.t, 0.0);
    } else {
      frame_offset = seeded_offsets[static_cast<std::size_t>(trial - params.trials)];
    }

    auto& target_poses = guess.poses[target];
    target_poses.clear();
    for (std::size_t a = 0; a < window.size(); ++a) {
      if (auto it = window[a].vio.find(target); it != window[a].vio.end()) {
        target_poses[window[a].t] = compose(frame_offset, it->second);
      }
    }
    ++result.trials_run;

    // Ranges and odometry alone leave flat valleys, so detections that the
    // starting guess already explains are used from the first solve on.
    std::optional<TrialOutcome> outcome;
    SlidingWindow labeled = window;
    ProblemSpec with_det = spec;
    with_det.families.detection = true;
    int previous = 0;
    if (params.association) {
      previous = associate_tentatively(labeled, observer, target, target_poses, state, fixed,
                                       *params.association, range_tolerance);
    }
    if (previous > 0) {
      outcome = solve_from(labeled, with_det);
      if (outcome) {
        outcome->associated = previous;
        outcome->labels = labels_of(labeled);
      }
    } else {
      outcome = solve_from(window, spec);
    }
    if (!outcome) continue;

    // Alternate between labeling the detections the solution explains and
    // re-solving with them until the labeling settles.
    if (params.association) {
      for (int round = 0; round < 3; ++round) {
        labeled = window;
        const int n = associate_tentatively(labeled, observer, target, outcome->poses, state,
                                            fixed, *params.association, range_tolerance);
        if (n == 0 || n == previous) break;
        previous = n;
        guess.poses[target] = outcome->poses;
        auto refined = solve_from(labeled, with_det);
        if (!refined) break;
        refined->associated = n;
        refined->labels = labels_of(labeled);
        outcome = std::move(refined);
      }
    }
    outcomes.push_back(std::move(*outcome));
  }
  if (outcomes.empty()) {
    result.status = InitStatus::kCostGate;
    return result;
  }

  // Most detections explained first, then lowest cost.
  const auto best_it = std::min_element(outcomes.begin(), outcomes.end(),
                                        [](const TrialOutcome& a, const TrialOutcome& b) {
                                          if (a.associated != b.associated) return a.associated > b.associated;
                                          return a.cost < b.cost;
                                        });
  const TrialOutcome& best = *best_it;
  result.cost = best.cost;
  result.mean_sq_residual = 2.0 * best.cost / std::max(1, best.scalars);
  result.poses = best.poses;
  result.labels = best.labels;
  if (best.cov_ok) {
    result.sigma_translation = std::sqrt(best.cov.topLeftCorner<3, 3>().trace());
    result.sigma_yaw = std::sqrt(best.cov(3, 3));
  } else {
    result.sigma_translation = result.sigma_yaw = std::numeric_limits<double>::infinity();
  }

  if (!(result.mean_sq_residual < params.gate_factor)) {
    result.status = InitStatus::kCostGate;
    return result;
  }
  for (const TrialOutcome& o : outcomes) {
    if (o.associated != best.associated) continue;
    if (2.0 * (o.cost - best.cost) >= params.ambiguity_chi2) continue;
    if ((o.ref_pose.t - best.ref_pose.t).norm() > params.agree_translation ||
        std::abs(wrap_angle(o.ref_pose.yaw() - best.ref_pose.yaw())) > params.agree_yaw) {
      result.status = InitStatus::kAmbiguous;
      return result;
    }
  }
  if (!(result.sigma_translation <= params.max_sigma_translation &&
        result.sigma_yaw <= params.max_sigma_yaw)) {
    result.status = InitStatus::kUncertain;
    return result;
  }
  result.status = InitStatus::kReady;
  return result;
}

void EstimatorConfig::validate() const {
  keyframe.validate();
  if (window_size == 0) throw std::invalid_argument("window_size must be > 0");
  if (!(weights.sigma_d > 0.0 && weights.sigma_det > 0.0 && weights.sigma_vio_t > 0.0 &&
        weights.sigma_vio_yaw > 0.0 && weights.vio_step > 0.0)) {
    throw std::invalid_argument("estimator sigmas must be > 0");
  }
  if (init.trials < 1) throw std::invalid_argument("init trials must be >= 1");
  if (!(period > 0.0)) throw std::invalid_argument("frame period must be > 0");
  if (!families.distance && !families.detection) {
    throw std::invalid_argument("at least one of UWB and detection must be enabled");
  }
}

const TargetEstimate* SwarmEstimate::find(DroneId id) const {
  for (const auto& t : targets) {
    if (t.target == id) return &t;
  }
  return nullptr;
}

RelativeEstimator::RelativeEstimator(DroneId self, EstimatorConfig config)
    : self_(self),
      config_(std::move(config)),
      assembler_(config_.period),
      window_(config_.window_size),
      rng_(config_.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(self + 1))) {
  config_.validate();
}

void RelativeEstimator::ingest(const Packet& packet) { assembler_.add(packet); }

std::vector<SwarmEstimate> RelativeEstimator::advance(double up_to) {
  std::vector<SwarmEstimate> out;
  for (Frame& f : assembler_.pop_ready(up_to)) out.push_back(process(std::move(f)));
  return out;
}

SwarmEstimate RelativeEstimator::process(Frame frame) {
  for (const auto& [id, pose] : frame.vio) latest_vio_[id] = {frame.t, pose};
  // Without the detection family the frame carries no detections at all, so
  // they do not drive keyframe selection either.
  if (!config_.families.detection) {
    frame.detections.clear();
    frame.labels.clear();
  }
  label_detections(frame);
  const double t = frame.t;
  if (is_keyframe(frame, window_, config_.keyframe, self_).keyframe) {
    if (window_.push(std::move(frame))) forget_evicted();
    update();
  }
  return predict(t);
}

std::optional<Pose4> RelativeEstimator::predicted_pose(DroneId id) const {
  auto latest = latest_vio_.find(id);
  if (id == self_) {
    if (latest == latest_vio_.end()) return std::nullopt;
    return latest->second.second;
  }
  auto anchor = anchors_.find(id);
  if (anchor == anchors_.end() || !state_.is_initialized(id)) return std::nullopt;
  if (latest == latest_vio_.end()) return anchor->second.pose;
  return compose(anchor->second.pose, relative(anchor->second.vio, latest->second.second));
}

void RelativeEstimator::label_detections(Frame& frame) {
  if (!config_.families.detection) return;
  std::map<DroneId, std::vector<std::size_t>> by_detector;
  for (std::size_t i = 0; i < frame.detections.size(); ++i) {
    by_detector[frame.detections[i].observer].push_back(i);
  }
  for (auto it = last_match_.begin(); it != last_match_.end();) {
    it = by_detector.contains(it->first) ? std::next(it) : last_match_.erase(it);
  }

  for (const auto& [detector, indices] : by_detector) {
    const auto detector_pose = predicted_pose(detector);
    if (!detector_pose) {
      last_match_.erase(detector);
      continue;
    }
    MatchRecord rec;
    rec.t = frame.t;
    rec.detector = detector;
    for (std::size_t i : indices) rec.detections.push_back(frame.detections[i]);

    std::set<DroneId> candidates = state_.initialized;
    candidates.insert(self_);
    for (DroneId id : candidates) {
      if (id == detector) continue;
      if (id != self_) {
        auto anchor = anchors_.find(id);
        if (anchor == anchors_.end() || frame.t - anchor->second.t > config_.max_match_staleness) {
          continue;
        }
      }
      if (auto p = predicted_pose(id)) rec.predicted[id] = relative(*detector_pose, *p).t;
    }
    if (rec.predicted.empty()) {
      last_match_.erase(detector);
      continue;
    }

    auto prev = last_match_.find(detector);
    if (prev != last_match_.end() &&
        validate_track(prev->second, rec.detections, config_.overlap_thresh,
                       config_.match.gate) == TrackDecision::kKeep) {
      const auto carried = carry_labels(prev->second, rec.detections);
      for (std::size_t i = 0; i < rec.detections.size(); ++i) {
        const DetectionMeas& d = rec.detections[i];
        const double ratio = reprojected_size(d) / config_.match.drone_size;
        if (!(std::abs(ratio - 1.0) <= config_.match.size_tol)) {
          rec.result.outliers.push_back({i, d, OutlierReason::kSize});
          continue;
        }
        auto pred = carried[i] ? rec.predicted.find(*carried[i]) : rec.predicted.end();
        const double disparity =
            pred == rec.predicted.end() ? std::numeric_limits<double>::infinity()
                                        : (d.rel_t - pred->second).norm();
        if (disparity < config_.match.gate) {
          rec.result.assignments.push_back({i, d, *carried[i], disparity});
        } else {
          rec.result.outliers.push_back({i, d, OutlierReason::kGate});
        }
      }
      rec.tracked = true;
    } else {
      rec.result = match(rec.detections, rec.predicted, config_.match);
    }

    for (const Assignment& a : rec.result.assignments) {
      frame.labels[indices[a.detection_index]] = a.target;
    }
    last_match_[detector] = rec.result;
    if (match_hook_) match_hook_(rec);
  }
}

void RelativeEstimator::forget_evicted() {
  if (window_.empty()) return;
  const double oldest = window_.front().t;
  for (auto& [id, poses] : state_.poses) {
    poses.erase(poses.begin(), poses.lower_bound(oldest));
  }
}

void RelativeEstimator::refresh_anchors() {
  for (DroneId id : state_.initialized) {
    for (std::size_t a = window_.size(); a-- > 0;) {
      const Frame& f = window_[a];
      auto vio = f.vio.find(id);
      if (vio == f.vio.end()) continue;
      if (auto p = state_.pose(id, f.t)) {
        anchors_[id] = {f.t, *p, vio->second};
        break;
      }
    }
  }
}

void RelativeEstimator::update() {
  const PruningPlan plan =
      annotate_hover_and_prune(window_, self_, config_.hover, config_.enable_pruning);
  const std::vector<DroneId> present = window_.drones();

  for (DroneId id : present) {
    if (id == self_ || state_.is_initialized(id)) continue;
    InitParams init_params = config_.init;
    if (config_.families.detection) init_params.association = config_.match;
    const InitResult init = initialize_target(window_, plan, self_, id, state_, config_.weights,
                                              init_params, rng_);
    if (init.status == InitStatus::kReady) {
      // Keep the detections the accepted solution explained.
      for (std::size_t a = 0; a < window_.size(); ++a) {
        auto it = init.labels.find(window_[a].t);
        if (it != init.labels.end()) window_[a].labels = it->second;
      }
      state_.poses[id] = init.poses;
      state_.initialized.insert(id);
      strikes_[id] = 0;
    }
  }

  ProblemSpec spec;
  spec.observer = self_;
  spec.families = config_.families;
  spec.weights = config_.weights;
  for (DroneId id : present) {
    if (id == self_ || !state_.is_initialized(id)) continue;
    auto& poses = state_.poses[id];
    if (poses.empty()) {
      // Re-entering drone: restart its chain from the last anchor.
      auto anchor = anchors_.find(id);
      if (anchor == anchors_.end()) continue;
      for (std::size_t a = 0; a < window_.size(); ++a) {
        if (auto vio = window_[a].vio.find(id); vio != window_[a].vio.end()) {
          poses[window_[a].t] =
              compose(anchor->second.pose, relative(anchor->second.vio, vio->second));
          break;
        }
      }
    }
    spec.free_drones.insert(id);
  }
  if (spec.free_drones.empty()) return;

  BuiltProblem built = build_problem(window_, plan, spec, state_);
  if (built.residual_blocks() == 0 || built.free_variables == 0) return;
  const nls::SolveReport report = nls::solve(built.problem, config_.solver);
  if (record_solves_) {
    solve_log_.push_back({window_.back().t, report, built.state_variables, built.free_variables,
                          built.residual_blocks(), plan});
  }
  if (report.termination == nls::Termination::kDiverged) return;
  store_solution(built, window_, spec.free_drones, state_);

  // Per-target consistency gate; repeated violations demote the target.
  std::map<DroneId, std::pair<double, int>> share;
  const auto& problem = built.problem;
  std::vector<Pose4> local;
  nls::ResidualVector r;
  for (int b = 0; b < problem.num_residual_blocks(); ++b) {
    const auto& block = problem.residual(b);
    local.clear();
    for (int v : block.variables()) local.push_back(problem.value(v));
    r.resize(block.dimension());
    block.evaluate(local, r, {});
    for (DroneId id : built.block_drones[static_cast<std::size_t>(b)]) {
      share[id].first += r.squaredNorm();
      share[id].second += block.dimension();
    }
  }
  for (DroneId id : spec.free_drones) {
    auto it = share.find(id);
    if (it == share.end() || it->second.second == 0) continue;
    const double mean_sq = it->second.first / it->second.second;
    int& strikes = strikes_[id];
    strikes = mean_sq > config_.init.gate_factor ? strikes + 1 : 0;
    if (strikes >= config_.divergence_strikes) {
      state_.initialized.erase(id);
      state_.poses.erase(id);
      anchors_.erase(id);
      strikes = 0;
    }
  }
  refresh_anchors();
}

SwarmEstimate RelativeEstimator::predict(double t) const {
  SwarmEstimate est;
  est.t = t;
  est.observer = self_;
  est.targets.push_back({self_, Pose4::identity(), 0.0, true});

  std::set<DroneId> known;
  for (const auto& [id, v] : latest_vio_) known.insert(id);
  for (const auto& [id, a] : anchors_) known.insert(id);
  known.erase(self_);

  const auto own = predicted_pose(self_);
  for (DroneId id : known) {
    TargetEstimate te;
    te.target = id;
    auto anchor = anchors_.find(id);
    if (own && state_.is_initialized(id) && anchor != anchors_.end()) {
      if (auto p = predicted_pose(id)) {
        te.relative = relative(*own, *p);
        te.staleness = std::max(0.0, t - anchor->second.t);
        te.initialized = true;
      }
    }
    est.targets.push_back(te);
  }
  return est;
}

}  // namespace swarmloc
