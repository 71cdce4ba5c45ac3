#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "swarmloc/records.hpp"
#include "swarmloc/runner.hpp"
#include "swarmloc/scenario.hpp"

using namespace swarmloc;
using namespace swarmloc::testing;

TEST(Records, EstimatesRoundTrip) {
  std::vector<EstimateRecord> in{{0.01, 0, 1, Pose4(1.5, -2.25, 0.125, 3.0), 0.0, true},
                                 {0.02, 2, 0, Pose4(), 1.5, false}};
  std::stringstream ss;
  write_estimates(ss, in);
  const auto out = read_estimates(ss);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].t, in[i].t);
    EXPECT_EQ(out[i].observer, in[i].observer);
    EXPECT_EQ(out[i].target, in[i].target);
    EXPECT_EQ(out[i].pose.t, in[i].pose.t);
    EXPECT_EQ(out[i].pose.yaw(), in[i].pose.yaw());
    EXPECT_EQ(out[i].staleness, in[i].staleness);
    EXPECT_EQ(out[i].initialized, in[i].initialized);
  }
}

TEST(Records, MeasurementsAndTruthRoundTrip) {
  ExperimentConfig c = scenario("three_drones");
  c.duration = 2.0;
  c.noise.range_dropout_prob = 0.2;
  const Simulation sim = simulate(c, 4);
  std::stringstream ms, ts;
  write_measurements(ms, sim.measurements);
  write_truth(ts, sim.truth);
  const auto frames = read_measurements(ms);
  ASSERT_EQ(frames.size(), sim.measurements.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    EXPECT_EQ(frames[k].t, sim.measurements[k].t);
    EXPECT_EQ(frames[k].distances, sim.measurements[k].distances);
    EXPECT_EQ(frames[k].detections, sim.measurements[k].detections);
    EXPECT_TRUE(frames[k].detection_truth.empty());
    for (std::size_t i = 0; i < frames[k].vio.size(); ++i) {
      EXPECT_EQ(frames[k].vio[i].pose.t, sim.measurements[k].vio[i].pose.t);
    }
  }
  const GroundTruth gt = read_truth(ts);
  EXPECT_EQ(gt.dt, sim.truth.dt);
  ASSERT_EQ(gt.num_drones(), 3u);
  EXPECT_EQ(gt.poses[2].back().t, sim.truth.poses[2].back().t);
}

TEST(Records, MalformedLinesNameTheLine) {
  std::stringstream ss;
  ss << R"({"t":0,"observer":0,"target":1,"x":0,"y":0,"z":0,"yaw":0,"staleness":0,"initialized":true})"
     << "\n{not json\n";
  try {
    read_estimates(ss);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos) << e.what();
  }
  std::stringstream missing("{\"t\": 0}\n");
  EXPECT_THROW(read_estimates(missing), std::runtime_error);
  std::stringstream bad_truth("[1,2]\n");
  EXPECT_THROW(read_truth(bad_truth), std::runtime_error);
}

TEST(Config, BundledScenariosLoadAndRoundTrip) {
  for (const char* name : {"two_drones", "three_drones", "hover_five", "formation_five", "noiseless_two"}) {
    const ExperimentConfig c = scenario(name);
    const ExperimentConfig again = parse_config(dump_config(c));
    EXPECT_EQ(dump_config(again), dump_config(c)) << name;
  }
}

TEST(Config, RejectsBadContent) {
  const std::string drones =
      R"("drones": [{"kind": "hover"}, {"kind": "circle", "radius": 2, "angular_rate": 0.5}])";
  EXPECT_NO_THROW(parse_config("{" + drones + "}"));
  EXPECT_THROW(parse_config("{" + drones + R"(, "use_uwb": false, "use_detection": false})"),
               std::invalid_argument);
  EXPECT_THROW(parse_config("{" + drones + R"(, "speling": 1})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{" + drones + R"(, "noise": {"sigma_d": -1}})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{" + drones + R"(, "noise": {"sigma_dd": 1}})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"drones": [{"kind": "spiral"}, {"kind": "hover"}]})"),
               std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"drones": [{"kind": "hover"}]})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{" + drones + R"(, "observers": [5]})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{" + drones + R"(, "dt": "fast"})"), std::invalid_argument);
  EXPECT_THROW(parse_config("{oops"), std::invalid_argument);
  EXPECT_THROW(load_config("/nonexistent/config.json"), std::invalid_argument);
}

TEST(Config, AblationFlagsReachTheEstimator) {
  ExperimentConfig c = scenario("two_drones");
  c.use_uwb = false;
  const EstimatorConfig ec = effective_estimator(c, 3);
  EXPECT_FALSE(ec.families.distance);
  EXPECT_TRUE(ec.families.detection);
  EXPECT_DOUBLE_EQ(ec.period, c.dt);
}

TEST(Runner, SameSeedSameOutput) {
  ExperimentConfig c = scenario("three_drones");
  c.duration = 10.0;
  c.link.loss_prob = 0.1;
  c.link.jitter = 0.02;
  std::stringstream a, b;
  const RunResult r1 = run_experiment(c, 7, {}, true);
  const RunResult r2 = run_experiment(c, 7, {}, false);
  for (const auto& [o, recs] : r1.est.estimates) write_estimates(a, recs);
  for (const auto& [o, recs] : r2.est.estimates) write_estimates(b, recs);
  EXPECT_FALSE(a.str().empty());
  EXPECT_EQ(a.str(), b.str());
}
