#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "swarmloc/estimator.hpp"
#include "swarmloc/framing.hpp"
#include "swarmloc/netlink.hpp"
#include "swarmloc/simworld.hpp"

using namespace swarmloc;
using swarmloc::testing::to_frame;

namespace {

TrajectorySpec hover_at(const Eigen::Vector3d& p, double yaw = 0.0) {
  TrajectorySpec s;
  s.center = p;
  s.yaw0 = yaw;
  return s;
}

TrajectorySpec circle(const Eigen::Vector3d& c, double radius, double rate, double phase) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::kCircle;
  s.center = c;
  s.radius = radius;
  s.angular_rate = rate;
  s.phase = phase;
  s.yaw_rate = 0.2;
  return s;
}

// What drone i puts on the air at one step: its odometry, the ranges it
// initiates (pairs where it is the lower id) and its own detections.
std::vector<Packet> packets_from(const MeasurementFrame& m, DroneId i) {
  std::vector<Packet> out;
  out.push_back({i, m.t, m.vio[static_cast<std::size_t>(i)]});
  DistancePayload ranges;
  for (const DistanceMeas& d : m.distances) {
    if (d.pair.first == i) ranges.ranges.push_back(d);
  }
  out.push_back({i, m.t, ranges});
  DetectionPayload dets;
  for (const DetectionMeas& d : m.detections) {
    if (d.observer == i) dets.detections.push_back(d);
  }
  out.push_back({i, m.t, dets});
  return out;
}

void expect_same_frame(const Frame& a, const Frame& b) {
  EXPECT_DOUBLE_EQ(a.t, b.t);
  ASSERT_EQ(a.vio.size(), b.vio.size());
  for (const auto& [id, p] : a.vio) {
    EXPECT_EQ(p.t, b.vio.at(id).t);
    EXPECT_EQ(p.yaw(), b.vio.at(id).yaw());
  }
  EXPECT_EQ(a.distances, b.distances);
  ASSERT_EQ(a.detections.size(), b.detections.size());
  // Detection order depends on arrival order; compare as multisets.
  for (const DetectionMeas& d : a.detections) {
    EXPECT_NE(std::find(b.detections.begin(), b.detections.end(), d), b.detections.end());
  }
}

Frame frame_at(double t, std::map<DroneId, Pose4> vio) {
  Frame f;
  f.t = t;
  f.vio = std::move(vio);
  return f;
}

}  // namespace

TEST(Assemble, CompleteAndPartialFrames) {
  std::vector<TrajectorySpec> specs;
  for (int i = 0; i < 5; ++i) specs.push_back(hover_at({2.0 * i, 0, 1}));
  const GroundTruth gt = sample_truth(specs, 0.01, 0.01);
  const auto frames = simulate_measurements(gt, NoiseConfig{});
  std::vector<Packet> all;
  for (DroneId i = 0; i < 5; ++i) {
    for (Packet& p : packets_from(frames[0], i)) all.push_back(std::move(p));
  }
  const Frame full = assemble(0.0, all);
  EXPECT_EQ(full.vio.size(), 5u);
  EXPECT_EQ(full.distances.size(), 10u);

  // Drone 3 lost: its odometry is gone, and of its ranges only those that
  // the other endpoint initiated survive.
  std::vector<Packet> partial;
  for (const Packet& p : all) {
    if (p.sender != 3) partial.push_back(p);
  }
  const Frame f = assemble(0.0, partial);
  EXPECT_EQ(f.vio.size(), 4u);
  EXPECT_FALSE(f.has_drone(3));
  EXPECT_TRUE(f.distances.contains(DronePair(0, 3)));
  EXPECT_FALSE(f.distances.contains(DronePair(3, 4)));
}

TEST(Assemble, DuplicatePairKeepsLatest) {
  std::vector<Packet> p{{0, 0.0, DistancePayload{{{DronePair(0, 1), 2.0}}}},
                        {1, 0.0, DistancePayload{{{DronePair(0, 1), 2.5}}}}};
  EXPECT_DOUBLE_EQ(assemble(0.0, p).distances.at(DronePair(0, 1)), 2.5);
}

// Packets pushed through a loss-free channel with latency and jitter and
// reassembled by each receiver give the frames a direct copy would.
TEST(Assemble, ReplayThroughLosslessChannelMatchesDirect) {
  const std::vector<TrajectorySpec> specs{circle({0, 0, 1}, 2.0, 0.5, 0.0),
                                          circle({4, 0, 1.5}, 1.0, -0.7, 1.0),
                                          hover_at({2, 3, 1}, -1.5)};
  const GroundTruth gt = sample_truth(specs, 0.01, 4.0);
  NoiseConfig noise;
  noise.rng_seed = 4;
  const auto frames = simulate_measurements(gt, noise);

  Channel ch(LinkModel{.loss_prob = 0.0, .latency = 0.02, .jitter = 0.03, .seed = 8});
  std::map<DroneId, FrameAssembler> rx;
  for (DroneId i = 0; i < 3; ++i) {
    ch.register_node(i);
    rx.emplace(i, FrameAssembler(0.01));
  }
  std::map<DroneId, std::vector<Frame>> got;
  auto drain = [&](double up_to) {
    for (auto& [i, a] : rx) {
      for (Frame& f : a.pop_ready(up_to)) got[i].push_back(std::move(f));
    }
  };
  const int lag = 6;  // > (latency + jitter) / period
  for (std::size_t k = 0; k < frames.size(); ++k) {
    for (DroneId i = 0; i < 3; ++i) {
      for (const Packet& p : packets_from(frames[k], i)) {
        ch.broadcast(p);
        rx.at(i).add(p);
      }
    }
    const Delivery d = ch.step(0.01);
    for (const auto& [i, packets] : d.per_node) {
      for (const Packet& p : packets) rx.at(i).add(p);
    }
    if (k >= lag) drain(frames[k - lag].t);
  }
  for (int extra = 0; extra < lag; ++extra) {
    const Delivery d = ch.step(0.01);
    for (const auto& [i, packets] : d.per_node) {
      for (const Packet& p : packets) rx.at(i).add(p);
    }
  }
  drain(frames.back().t);

  for (DroneId i = 0; i < 3; ++i) {
    EXPECT_EQ(rx.at(i).late_packets(), 0u);
    ASSERT_EQ(got[i].size(), frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k) expect_same_frame(got[i][k], to_frame(frames[k]));
  }
}

TEST(KeyframeParams, OrderingIsEnforced) {
  EXPECT_NO_THROW((KeyframeParams{0.5, 0.1}.validate()));
  EXPECT_THROW((KeyframeParams{0.5, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((KeyframeParams{0.5, 0.0}.validate()), std::invalid_argument);
}

TEST(Keyframe, FirstFrameAlwaysQualifies) {
  const SlidingWindow w;
  const auto d = is_keyframe(frame_at(0.0, {{0, Pose4()}}), w, {}, 0);
  EXPECT_TRUE(d.keyframe);
  EXPECT_EQ(d.reason, KeyframeReason::kFirstOrNewDrone);
}

TEST(Keyframe, BetweenThresholds) {
  SlidingWindow w;
  w.push(frame_at(0.0, {{0, Pose4()}, {1, Pose4(3, 0, 0, 0)}}));
  Frame f = frame_at(0.1, {{0, Pose4(0.3, 0, 0, 0)}, {1, Pose4(3, 0, 0, 0)}});
  EXPECT_FALSE(is_keyframe(f, w, {0.5, 0.1}, 0).keyframe);
  f.detections.push_back({1, {-3.3, 0, 0}, 0.1});  // drone 1 sees something
  EXPECT_FALSE(is_keyframe(f, w, {0.5, 0.1}, 0).keyframe);
  f.labels.assign(1, DroneId{0});  // ... and it was the observer
  EXPECT_EQ(is_keyframe(f, w, {0.5, 0.1}, 0).reason,
            KeyframeReason::kDisplacementTd1WithDetection);
  f.labels.clear();
  f.detections.push_back({0, {2.7, 0, 0}, 0.1});
  EXPECT_TRUE(is_keyframe(f, w, {0.5, 0.1}, 0).keyframe);
}

// Every combination of (new drone, displacement > td0, displacement > td1
// with an observer detection) against the plain disjunction.
TEST(Keyframe, AllEightCombinations) {
  const KeyframeParams params{0.5, 0.1};
  for (int mask = 0; mask < 8; ++mask) {
    const bool new_drone = mask & 1;
    const bool over_td0 = mask & 2;
    const bool td1_det = mask & 4;
    SlidingWindow w;
    w.push(frame_at(0.0, {{0, Pose4()}, {1, Pose4(4, 0, 0, 0)}}));
    // Over td0 implies over td1, so the third condition then only needs the
    // detection. Without it, alternate which half is missing.
    double displacement = over_td0 ? 0.7 : 0.3;
    bool detection = td1_det;
    if (!over_td0 && !td1_det && (mask & 1)) displacement = 0.05, detection = true;
    Frame f = frame_at(1.0, {{0, Pose4(displacement, 0, 0, 0)}, {1, Pose4(4, 0, 0, 0)}});
    if (new_drone) f.vio[2] = Pose4(0, 4, 0, 0);
    if (detection) f.detections.push_back({0, {3.5, 0, 0}, 0.3 / 3.5});
    const bool expected = new_drone || over_td0 || (displacement > params.td1 && detection);
    const KeyframeDecision d = is_keyframe(f, w, params, 0);
    EXPECT_EQ(d.keyframe, expected) << "mask " << mask;
    if (new_drone) EXPECT_EQ(d.reason, KeyframeReason::kFirstOrNewDrone);
    else if (over_td0) EXPECT_EQ(d.reason, KeyframeReason::kDisplacementTd0);
  }
}

TEST(SlidingWindow, BoundedAndOrdered) {
  SlidingWindow w(50);
  for (int k = 0; k < 49; ++k) EXPECT_FALSE(w.push(frame_at(k, {{0, Pose4()}})).has_value());
  EXPECT_FALSE(w.push(frame_at(49, {{0, Pose4()}})).has_value());
  EXPECT_EQ(w.size(), 50u);
  const auto evicted = w.push(frame_at(50, {{0, Pose4()}}));
  ASSERT_TRUE(evicted.has_value());
  EXPECT_DOUBLE_EQ(evicted->t, 0.0);
  EXPECT_EQ(w.size(), 50u);
  EXPECT_THROW(w.push(frame_at(50, {})), std::invalid_argument);
  EXPECT_THROW(w.push(frame_at(10, {})), std::invalid_argument);
}

// After many evictions the odometry increments between surviving keyframes
// still equal those recomputed from the raw odometry log, including drones
// that skip keyframes.
TEST(SlidingWindow, ChainsSurviveEviction) {
  const std::vector<TrajectorySpec> specs{circle({0, 0, 1}, 2.0, 0.5, 0.0),
                                          circle({4, 0, 1.5}, 1.0, -0.7, 1.0)};
  const GroundTruth gt = sample_truth(specs, 0.01, 30.0);
  NoiseConfig noise;
  noise.rng_seed = 9;
  const auto frames = simulate_measurements(gt, noise);
  SlidingWindow w(50);
  std::mt19937_64 rng(2);
  std::bernoulli_distribution present(0.7);
  std::vector<std::size_t> sample_of;
  for (int push = 0; push < 200; ++push) {
    const std::size_t k = 10 + static_cast<std::size_t>(push) * 13;
    Frame f = to_frame(frames[k]);
    if (!present(rng)) f.vio.erase(1);
    w.push(std::move(f));
    sample_of.push_back(k);
  }
  ASSERT_EQ(w.size(), 50u);
  const std::size_t first = sample_of.size() - 50;
  for (DroneId id : {0, 1}) {
    for (std::size_t a = 0; a < w.size(); ++a) {
      const auto delta = w.vio_delta(id, a);
      const auto prev = w.previous_with(id, a);
      if (!w[a].has_drone(id) || !prev) {
        EXPECT_FALSE(delta.has_value());
        continue;
      }
      const Pose4 direct = relative(frames[sample_of[first + *prev]].vio[id].pose,
                                    frames[sample_of[first + a]].vio[id].pose);
      ASSERT_TRUE(delta.has_value());
      EXPECT_NEAR((delta->t - direct.t).norm(), 0.0, 1e-9);
      EXPECT_NEAR(wrap_angle(delta->yaw() - direct.yaw()), 0.0, 1e-9);
    }
  }
}

TEST(Pruning, AllMovingGivesEmptyPlan) {
  const std::vector<TrajectorySpec> specs{circle({0, 0, 1}, 2.0, 0.5, 0.0),
                                          circle({4, 0, 1.5}, 1.5, -0.7, 1.0)};
  const GroundTruth gt = sample_truth(specs, 0.01, 20.0);
  const auto frames = simulate_measurements(gt, NoiseConfig::noiseless());
  SlidingWindow w;
  for (std::size_t k = 0; k < 50; ++k) w.push(to_frame(frames[k * 20]));
  const PruningPlan plan = annotate_hover_and_prune(w, 0, {});
  EXPECT_TRUE(plan.empty());
  EXPECT_EQ(plan.variables_after, plan.variables_before);
  EXPECT_EQ(plan.distance_residuals_after, plan.distance_residuals_before);
}

// Everything but the observer hovers for the whole window: one pose per
// hovering drone. The observer keeps one pose per keyframe because its
// poses are the anchor.
TEST(Pruning, AllHoveringCollapsesToOnePosePerDrone) {
  const std::size_t m = 50, n = 4;
  SlidingWindow w(m);
  for (std::size_t a = 0; a < m; ++a) {
    std::map<DroneId, Pose4> vio;
    for (DroneId i = 0; i < static_cast<DroneId>(n); ++i) vio[i] = Pose4();
    Frame f = frame_at(static_cast<double>(a), vio);
    for (DroneId i = 0; i < 4; ++i) {
      for (DroneId j = i + 1; j < 4; ++j) f.distances[DronePair(i, j)] = 3.0;
    }
    w.push(std::move(f));
  }
  const PruningPlan plan = annotate_hover_and_prune(w, 0, {});
  EXPECT_EQ(plan.variables_before, 4 * m * n);
  EXPECT_EQ(plan.variables_after, 4 * (n - 1) + 4 * m);
  EXPECT_EQ(plan.vio_residuals_after, m - 1);
  // Only pairs with the observer survive.
  EXPECT_EQ(plan.distance_residuals_after, 3 * m);
}

// Two drones exactly stationary, three moving (the observer among them):
// residuals and variables against a count written from the pruning rules.
TEST(Pruning, MixedScenarioMatchesTermEnumeration) {
  const std::vector<TrajectorySpec> specs{
      circle({0, 0, 1}, 2.0, 0.6, 0.0), circle({5, 0, 1.5}, 1.5, -0.8, 1.0),
      circle({0, 5, 2.0}, 1.0, 1.0, 2.0), hover_at({3, 3, 1}, 2.0), hover_at({-3, 2, 1.2}, -0.5)};
  const GroundTruth gt = sample_truth(specs, 0.01, 40.0);
  const auto frames = simulate_measurements(gt, NoiseConfig::noiseless());
  const std::size_t m = 50;
  SlidingWindow w(m);
  for (std::size_t k = 0; k < 200; ++k) {
    Frame f = to_frame(frames[k * 20]);
    // Label every detection with its true target so the detection family
    // is populated.
    for (std::size_t i = 0; i < f.detections.size(); ++i) f.labels[i] = frames[k * 20].detection_truth[i];
    w.push(std::move(f));
  }
  ASSERT_EQ(w.size(), m);
  const DroneId observer = 0;
  const std::set<DroneId> hovering{3, 4};

  // Oracle from the rules alone.
  std::size_t vars = 0, vio_terms = 0, dist_terms = 0, det_terms = 0;
  for (DroneId i = 0; i < 5; ++i) {
    vars += hovering.contains(i) ? 4 : 4 * m;
    if (i != observer && !hovering.contains(i)) vio_terms += m - 1;
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (const auto& [pair, range] : w[a].distances) {
      const bool both_hover = hovering.contains(pair.first) && hovering.contains(pair.second);
      if (!both_hover) ++dist_terms;
    }
    for (std::size_t i = 0; i < w[a].detections.size(); ++i) {
      if (w[a].labels[i]) ++det_terms;
    }
  }

  const PruningPlan plan = annotate_hover_and_prune(w, observer, {});
  EXPECT_EQ(plan.variables_before, 4 * 5 * m);
  EXPECT_EQ(plan.variables_after, vars);
  EXPECT_EQ(plan.distance_residuals_after, dist_terms);
  EXPECT_EQ(plan.distance_residuals_before, 10 * m);

  ProblemSpec spec;
  spec.observer = observer;
  spec.free_drones = {1, 2, 3, 4};
  SwarmState truth_state;
  for (DroneId i = 0; i < 5; ++i) {
    for (std::size_t a = 0; a < m; ++a) {
      const auto k = static_cast<std::size_t>(std::llround(w[a].t / 0.01));
      truth_state.poses[i][w[a].t] = relative(gt.poses[observer][0], gt.poses[i][k]);
    }
  }
  const BuiltProblem built = build_problem(w, plan, spec, truth_state);
  EXPECT_EQ(static_cast<std::size_t>(built.state_variables), vars);
  EXPECT_EQ(static_cast<std::size_t>(built.distance_blocks), dist_terms);
  EXPECT_EQ(static_cast<std::size_t>(built.vio_blocks), vio_terms);
  EXPECT_EQ(static_cast<std::size_t>(built.detection_blocks), det_terms);
  EXPECT_GT(det_terms, 0u);
}
