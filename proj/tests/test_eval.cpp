#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "support.hpp"
#include "swarmloc/eval.hpp"
#include "swarmloc/records.hpp"
#include "swarmloc/runner.hpp"

using namespace swarmloc;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<Eigen::Vector3d> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Eigen::Vector3d> p(n);
  for (auto& v : p) v = {u(rng), u(rng), u(rng)};
  return p;
}

double cost(const Pose4& T, const std::vector<Eigen::Vector3d>& est,
            const std::vector<Eigen::Vector3d>& truth) {
  double c = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) c += (transform_point(T, est[i]) - truth[i]).squaredNorm();
  return c;
}

}  // namespace

TEST(Align4Dof, IdentityOnIdenticalInput) {
  const auto p = random_points(20, 1);
  const Alignment a = align_4dof(p, p);
  EXPECT_FALSE(a.degenerate);
  EXPECT_LT(a.transform.t.norm(), 1e-12);
  EXPECT_LT(std::abs(a.transform.yaw()), 1e-12);
}

TEST(Align4Dof, RecoversKnownTransform) {
  const Pose4 T(1.0, 2.0, 0.0, 30.0 * kDeg);
  const auto est = random_points(30, 2);
  std::vector<Eigen::Vector3d> truth;
  for (const auto& p : est) truth.push_back(transform_point(T, p));
  const Alignment a = align_4dof(est, truth);
  EXPECT_LT((a.transform.t - T.t).norm(), 1e-12);
  EXPECT_NEAR(a.transform.yaw(), T.yaw(), 1e-12);
}

// For a fixed yaw the optimal translation is the centroid difference, so a
// fine yaw sweep is an independent optimum.
TEST(Align4Dof, NoisyMatchesYawSweep) {
  const Pose4 T(-3.0, 0.5, 0.2, -100.0 * kDeg);
  const auto est = random_points(40, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.2);
  std::vector<Eigen::Vector3d> truth;
  for (const auto& p : est) truth.push_back(transform_point(T, p) + Eigen::Vector3d(n(rng), n(rng), n(rng)));

  Eigen::Vector3d ce = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    ce += est[i];
    ct += truth[i];
  }
  ce /= static_cast<double>(est.size());
  ct /= static_cast<double>(est.size());
  double best_cost = std::numeric_limits<double>::infinity(), best_yaw = 0.0;
  for (int k = -18000; k < 18000; ++k) {
    const double yaw = k * 0.01 * kDeg;
    const Pose4 cand(ct - rot_z(yaw) * ce, yaw);
    const double c = cost(cand, est, truth);
    if (c < best_cost) {
      best_cost = c;
      best_yaw = yaw;
    }
  }
  const Alignment a = align_4dof(est, truth);
  EXPECT_LE(std::abs(wrap_angle(a.transform.yaw() - best_yaw)), 0.01 * kDeg);
  EXPECT_LE(cost(a.transform, est, truth), best_cost + 1e-9);
}

TEST(Align4Dof, Contract) {
  const auto p = random_points(3, 5);
  EXPECT_THROW(align_4dof(std::span(p).first(1), std::span(p).first(1)), std::invalid_argument);
  EXPECT_THROW(align_4dof(std::span(p).first(2), std::span(p)), std::invalid_argument);
  std::vector<Eigen::Vector3d> column{{1, 1, 0}, {1, 1, 2}};
  EXPECT_TRUE(align_4dof(column, column).degenerate);
}

TEST(Rmse, ZeroForPerfectEstimate) {
  std::vector<TimedPose> truth;
  for (int k = 0; k < 100; ++k) truth.push_back({k * 0.01, Pose4(k * 0.1, 1, 0, k * 0.05)});
  const RmseRow r = rmse(truth, truth, 0.01);
  EXPECT_EQ(r.samples, 100u);
  EXPECT_DOUBLE_EQ(r.x + r.y + r.z + r.yaw_deg, 0.0);
  EXPECT_NEAR(r.trajectory_length, 9.9, 1e-9);
}

TEST(Rmse, ConstantOffset) {
  std::vector<TimedPose> truth, est;
  for (int k = 0; k < 50; ++k) {
    truth.push_back({k * 0.01, Pose4(k, 0, 0, 0)});
    est.push_back({k * 0.01 + 0.002, Pose4(k + 0.1, 0, 0, 0.01)});
  }
  const RmseRow r = rmse(est, truth, 0.01);
  EXPECT_NEAR(r.x, 0.1, 1e-12);
  EXPECT_NEAR(r.y, 0.0, 1e-12);
  EXPECT_NEAR(r.yaw_deg, 0.01 / kDeg, 1e-9);
}

TEST(Rmse, UnmatchedSamplesAreSkipped) {
  std::vector<TimedPose> truth{{0.0, Pose4()}, {0.01, Pose4()}};
  std::vector<TimedPose> est{{0.0, Pose4()}, {0.5, Pose4(9, 9, 9, 0)}};
  EXPECT_EQ(rmse(est, truth, 0.01).samples, 1u);
  const std::vector<TimedPose> far{{1.0, Pose4()}};
  EXPECT_THROW(rmse(far, truth, 0.01), std::runtime_error);
}

// Moving estimates by T^-1 and passing T as the alignment leaves every error
// unchanged.
TEST(Rmse, AlignmentIsApplied) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<TimedPose> truth, est, moved;
  const Pose4 T(4, -2, 1, 1.2);
  for (int k = 0; k < 200; ++k) {
    const Pose4 gt(std::sin(k * 0.1), std::cos(k * 0.07), 0.01 * k, 0.02 * k);
    truth.push_back({k * 0.01, gt});
    est.push_back({k * 0.01, Pose4(gt.t + Eigen::Vector3d(n(rng), n(rng), n(rng)), gt.yaw() + n(rng))});
    moved.push_back({k * 0.01, compose(inverse(T), est.back().pose)});
  }
  const RmseRow a = rmse(est, truth, 0.01);
  const RmseRow b = rmse(moved, truth, 0.01, T);
  EXPECT_NEAR(a.x, b.x, 1e-12);
  EXPECT_NEAR(a.y, b.y, 1e-12);
  EXPECT_NEAR(a.z, b.z, 1e-12);
  EXPECT_NEAR(a.yaw_deg, b.yaw_deg, 1e-9);
}

// Relative truth does not depend on the world frame.
TEST(RelativeTruth, InvariantUnderWorldTransform) {
  swarmloc::ExperimentConfig c = swarmloc::testing::scenario("three_drones");
  GroundTruth gt = sample_truth(c.trajectories, c.dt, 5.0);
  GroundTruth moved = gt;
  const Pose4 T(10, -3, 2, 2.5);
  for (auto& drone : moved.poses) {
    for (Pose4& p : drone) p = compose(T, p);
  }
  const auto a = relative_truth(gt, 0, 2);
  const auto b = relative_truth(moved, 0, 2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_LT((a[k].pose.t - b[k].pose.t).norm(), 1e-9);
    EXPECT_NEAR(wrap_angle(a[k].pose.yaw() - b[k].pose.yaw()), 0.0, 1e-12);
  }
}

TEST(Consistency, CountsLoopsAgainstTolerances) {
  const Pose4 a(1, 2, 0, 0.3);
  std::vector<TimedPose> ki{{0.0, a}, {0.01, a}, {0.02, a}};
  std::vector<TimedPose> ik{{0.0, inverse(a)},
                            {0.01, compose(inverse(a), Pose4(0.04, 0, 0, 0))},
                            {0.02, compose(inverse(a), Pose4(0, 0, 0, 2.0 * kDeg))}};
  const ConsistencyStats s = cross_agent_consistency(ki, ik, 0.01, 0.05, 1.0);
  EXPECT_EQ(s.samples, 3u);
  EXPECT_EQ(s.within, 2u);
  EXPECT_NEAR(s.max_yaw_deg, 2.0, 1e-9);
}

// RMSE recomputed from the written logs with a plain nearest-sample loop.
TEST(Artifacts, RmseRecomputedFromLogs) {
  swarmloc::ExperimentConfig c = swarmloc::testing::scenario("two_drones");
  c.duration = 15.0;
  const RunResult run = run_experiment(c, 2);
  const auto dir = std::filesystem::temp_directory_path() / "swarmloc_test_artifacts";
  std::filesystem::remove_all(dir);
  write_artifacts(run, dir);
  for (const char* f : {"measurements.jsonl", "truth.jsonl", "estimates.jsonl", "rmse.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream ein(dir / "estimates.jsonl"), tin(dir / "truth.jsonl");
  const auto records = read_estimates(ein);
  const GroundTruth gt = read_truth(tin);
  ASSERT_FALSE(run.report.rows.empty());
  for (const RmseRow& row : run.report.rows) {
    double sx = 0.0, syaw = 0.0;
    std::size_t n = 0;
    for (const EstimateRecord& r : records) {
      if (r.observer != row.observer || r.target != row.target || !r.initialized) continue;
      const auto k = static_cast<std::size_t>(std::llround(r.t / gt.dt));
      const Pose4 truth = relative(gt.poses[row.observer][k], gt.poses[row.target][k]);
      sx += std::pow(r.pose.t.x() - truth.t.x(), 2);
      syaw += std::pow(wrap_angle(r.pose.yaw() - truth.yaw()), 2);
      ++n;
    }
    ASSERT_EQ(n, row.samples);
    EXPECT_NEAR(std::sqrt(sx / n), row.x, 1e-6);
    EXPECT_NEAR(std::sqrt(syaw / n) / kDeg, row.yaw_deg, 1e-6);
  }
  std::filesystem::remove_all(dir);
}
