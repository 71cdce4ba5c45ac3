#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "swarmloc/matcher.hpp"

using namespace swarmloc;

namespace {

DetectionMeas det_at(const Eigen::Vector3d& p, double drone_size = 0.3) {
  return {0, p, drone_size / p.norm()};
}

Eigen::Vector3d random_ahead(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(2.0, 7.0), yz(-2.0, 2.0);
  return {x(rng), yz(rng), yz(rng)};
}

void expect_partition(const MatchResult& r, std::size_t n_detections) {
  std::multiset<std::size_t> seen;
  std::set<DroneId> targets;
  for (const Assignment& a : r.assignments) {
    seen.insert(a.detection_index);
    EXPECT_TRUE(targets.insert(a.target).second) << "target " << a.target << " used twice";
  }
  for (const Outlier& o : r.outliers) seen.insert(o.detection_index);
  ASSERT_EQ(seen.size(), n_detections);
  for (std::size_t i = 0; i < n_detections; ++i) EXPECT_EQ(seen.count(i), 1u);
}

// Best (count, total disparity) over every injective partial labeling of
// the detections by gated targets.
std::pair<std::size_t, double> brute_force(const std::vector<DetectionMeas>& dets,
                                           const std::map<DroneId, Eigen::Vector3d>& predicted,
                                           double gate) {
  std::vector<Eigen::Vector3d> pos;
  for (const auto& [id, p] : predicted) pos.push_back(p);
  std::pair<std::size_t, double> best{0, 0.0};
  std::vector<bool> used(pos.size(), false);
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t i, std::size_t n,
                                                                   double cost) {
    if (i == dets.size()) {
      if (n > best.first || (n == best.first && cost < best.second)) best = {n, cost};
      return;
    }
    rec(i + 1, n, cost);
    for (std::size_t t = 0; t < pos.size(); ++t) {
      const double d = (dets[i].rel_t - pos[t]).norm();
      if (used[t] || d >= gate) continue;
      used[t] = true;
      rec(i + 1, n + 1, cost + d);
      used[t] = false;
    }
  };
  rec(0, 0, 0.0);
  return best;
}

}  // namespace

TEST(Assignment, SolvesSmallMatrices) {
  Eigen::MatrixXd c(3, 3);
  c << 4, 1, 3,
       2, 0, 5,
       3, 2, 2;
  const auto col = solve_assignment(c);
  double total = 0.0;
  for (int r = 0; r < 3; ++r) total += c(r, col[r]);
  EXPECT_DOUBLE_EQ(total, 5.0);  // 1 + 2 + 2
}

TEST(Assignment, RectangularMatchesPermutations) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + trial % 4, cols = rows + trial % 3;
    Eigen::MatrixXd c(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < cols; ++k) c(r, k) = u(rng);
    }
    const auto col = solve_assignment(c);
    double got = 0.0;
    for (int r = 0; r < rows; ++r) got += c(r, col[r]);
    std::vector<int> perm(cols);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int r = 0; r < rows; ++r) s += c(r, perm[r]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(Match, ExactPrediction) {
  const std::vector<DetectionMeas> d{det_at({3, 0.5, 0})};
  const auto r = match(d, {{4, {3, 0.5, 0}}, {7, {3, -2, 0}}}, {});
  ASSERT_EQ(r.assignments.size(), 1u);
  EXPECT_EQ(r.assignments[0].target, 4);
  EXPECT_DOUBLE_EQ(r.assignments[0].disparity, 0.0);
  EXPECT_EQ(r.target_of(0), 4);
}

TEST(Match, FarDetectionIsGateOutlier) {
  const std::vector<DetectionMeas> d{det_at({3, 2, 0})};
  const auto r = match(d, {{1, {3, 0, 0}}, {2, {3, 4, 0}}}, {.gate = 0.5});
  ASSERT_EQ(r.outliers.size(), 1u);
  EXPECT_EQ(r.outliers[0].reason, OutlierReason::kGate);
}

TEST(Match, WrongSizeIsSizeOutlier) {
  const std::vector<DetectionMeas> d{det_at({3, 0, 0}, 1.2)};
  const auto r = match(d, {{1, {3, 0, 0}}}, {});
  ASSERT_EQ(r.outliers.size(), 1u);
  EXPECT_EQ(r.outliers[0].reason, OutlierReason::kSize);
}

TEST(Match, NearTieIsAmbiguous) {
  const std::vector<DetectionMeas> d{det_at({3, 0, 0})};
  const auto r = match(d, {{1, {3, 0.2, 0}}, {2, {3, -0.205, 0}}}, {});
  ASSERT_EQ(r.outliers.size(), 1u);
  EXPECT_EQ(r.outliers[0].reason, OutlierReason::kAmbiguous);
}

TEST(Match, ExactTieGoesToLowerId) {
  const std::vector<DetectionMeas> d{det_at({3, 0, 0})};
  const auto r = match(d, {{5, {3, 0.2, 0}}, {2, {3, -0.2, 0}}}, {.ambiguity_margin = 0.0});
  ASSERT_EQ(r.assignments.size(), 1u);
  EXPECT_EQ(r.assignments[0].target, 2);
}

// Detections near predicted positions in generic position: the total
// disparity equals the best of all permutations.
TEST(Match, ThreeByThreeMatchesPermutations) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.08);
  for (int trial = 0; trial < 500; ++trial) {
    std::map<DroneId, Eigen::Vector3d> predicted;
    std::vector<DetectionMeas> dets;
    for (DroneId t = 0; t < 3; ++t) {
      predicted[t] = random_ahead(rng);
      dets.push_back(det_at(predicted[t] + Eigen::Vector3d(noise(rng), noise(rng), noise(rng))));
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    const MatchParams p{.gate = 2.0, .ambiguity_margin = 0.0};
    const auto r = match(dets, predicted, p);
    expect_partition(r, dets.size());
    std::vector<int> perm{0, 1, 2};
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      bool ok = true;
      for (int i = 0; i < 3; ++i) {
        const double dd = (dets[i].rel_t - predicted[perm[i]]).norm();
        ok = ok && dd < p.gate;
        s += dd;
      }
      if (ok) best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (std::isfinite(best)) {
      ASSERT_EQ(r.assignments.size(), 3u);
      EXPECT_NEAR(r.total_disparity(), best, 1e-9);
    }
  }
}

// Up to six targets and detections, with clutter, misses and gating: the
// match count and total disparity equal the exhaustive optimum.
TEST(Match, OptimalAgainstExhaustiveSearch) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> count(0, 6);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 400; ++trial) {
    std::map<DroneId, Eigen::Vector3d> predicted;
    const int nt = count(rng);
    for (DroneId t = 0; t < nt; ++t) predicted[t * 3 + 1] = random_ahead(rng);
    std::vector<DetectionMeas> dets;
    for (const auto& [id, p] : predicted) {
      if (coin(rng)) continue;
      dets.push_back(det_at(p + Eigen::Vector3d(noise(rng), noise(rng), noise(rng))));
    }
    while (dets.size() < 6 && coin(rng)) dets.push_back(det_at(random_ahead(rng)));
    const MatchParams p{.gate = 0.8, .ambiguity_margin = 0.0};
    const auto r = match(dets, predicted, p);
    expect_partition(r, dets.size());
    const auto [n, cost] = brute_force(dets, predicted, p.gate);
    EXPECT_EQ(r.assignments.size(), n);
    EXPECT_NEAR(r.total_disparity(), cost, 1e-9);
  }
}

// Well separated targets and small noise: every label is right.
TEST(Match, SeparatedTargetsAreAlwaysRight) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.05);
  const MatchParams p;
  std::size_t checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::map<DroneId, Eigen::Vector3d> predicted;
    for (DroneId t = 0; t < 4; ++t) {
      Eigen::Vector3d c;
      bool far;
      do {
        c = random_ahead(rng);
        far = std::all_of(predicted.begin(), predicted.end(),
                          [&](const auto& kv) { return (kv.second - c).norm() > 2.0 * p.gate; });
      } while (!far);
      predicted[t] = c;
    }
    std::vector<DetectionMeas> dets;
    std::vector<DroneId> truth;
    for (const auto& [id, c] : predicted) {
      Eigen::Vector3d n(noise(rng), noise(rng), noise(rng));
      if (n.norm() >= p.gate / 2.0) continue;
      dets.push_back(det_at(c + n));
      truth.push_back(id);
    }
    const auto r = match(dets, predicted, p);
    for (const Assignment& a : r.assignments) {
      EXPECT_EQ(a.target, truth[a.detection_index]);
      ++checked;
    }
    EXPECT_TRUE(r.outliers.empty());
  }
  EXPECT_GT(checked, 7000u);
}

TEST(Track, SmallMoveKeepsLargeMoveRematches) {
  const std::vector<DetectionMeas> before{det_at({3, 0, 0})};
  const auto prev = match(before, {{1, {3, 0, 0}}}, {});
  const std::vector<DetectionMeas> near{det_at({3, 0.1, 0})};
  const std::vector<DetectionMeas> far{det_at({3, 0.4, 0})};
  EXPECT_EQ(validate_track(prev, near, 0.5, 0.5), TrackDecision::kKeep);
  EXPECT_EQ(validate_track(prev, far, 0.5, 0.5), TrackDecision::kRematch);
  EXPECT_EQ(carry_labels(prev, near)[0], 1);
}

TEST(Track, UnclaimedDetectionForcesRematch) {
  const std::vector<DetectionMeas> before{det_at({3, 0, 0})};
  const auto prev = match(before, {{1, {3, 0, 0}}}, {});
  const std::vector<DetectionMeas> now{det_at({3, 0.05, 0}), det_at({4, 2, 0})};
  EXPECT_EQ(validate_track(prev, now, 0.5, 0.5), TrackDecision::kRematch);
}

// One drone drifts past a hovering one. Tracking is kept while every
// previous detection's nearest new detection is its own drone's and the
// other way round, and must ask for a rematch at the first frame where
// either proximity order flips.
TEST(Track, CrossingTriggersRematchWhenOrderFlips) {
  const double step = 0.013;
  auto a_at = [&](int k) { return Eigen::Vector3d(3.0, 0.3 - step * k, 1.0); };
  auto b_at = [&](int) { return Eigen::Vector3d(3.0, 0.0, 1.005); };
  int flip = -1;
  for (int k = 1; k < 60 && flip < 0; ++k) {
    const double own_a = (a_at(k) - a_at(k - 1)).norm(), own_b = (b_at(k) - b_at(k - 1)).norm();
    const bool forward = (b_at(k) - a_at(k - 1)).norm() < own_a || (a_at(k) - b_at(k - 1)).norm() < own_b;
    const bool backward = (a_at(k) - b_at(k - 1)).norm() < own_a || (b_at(k) - a_at(k - 1)).norm() < own_b;
    if (forward || backward) flip = k;
  }
  ASSERT_GT(flip, 1);

  MatchResult prev;
  prev.assignments = {{0, det_at(a_at(0)), 1, 0.0}, {1, det_at(b_at(0)), 2, 0.0}};
  for (int k = 1; k <= flip; ++k) {
    const std::vector<DetectionMeas> now{det_at(a_at(k)), det_at(b_at(k))};
    const TrackDecision d = validate_track(prev, now, 0.5, 0.5);
    if (k < flip) {
      ASSERT_EQ(d, TrackDecision::kKeep) << "frame " << k;
      const auto labels = carry_labels(prev, now);
      EXPECT_EQ(labels[0], 1);
      EXPECT_EQ(labels[1], 2);
      prev.assignments = {{0, now[0], 1, 0.0}, {1, now[1], 2, 0.0}};
    } else {
      EXPECT_EQ(d, TrackDecision::kRematch) << "frame " << k;
    }
  }
}
