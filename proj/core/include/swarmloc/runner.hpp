#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "swarmloc/eval.hpp"
#include "swarmloc/records.hpp"
#include "swarmloc/scenario.hpp"

namespace swarmloc {

struct Simulation {
  GroundTruth truth;
  std::vector<MeasurementFrame> measurements;
};

/// Ground truth and sensor streams for one seed. Independent of the
/// ablation flags, so every variant sees the same measurements.
Simulation simulate(const ExperimentConfig& config, std::uint64_t seed);

struct SolveStat {
  double t = 0.0;
  double wall_s = 0.0;
  int state_variables = 0;
  int free_variables = 0;
  int residual_blocks = 0;
  int iterations = 0;
  nls::Termination termination = nls::Termination::kMaxIterations;
};

struct MatchStats {
  std::size_t assignments = 0;
  std::size_t correct = 0;  // only counted when truth labels are known
  std::size_t outliers = 0;
};

struct RunHooks {
  /// Called for every labeling step; `frame` is the simulated step with the
  /// hidden identities. Calls are serialized.
  std::function<void(DroneId observer, const MatchRecord& record, const MeasurementFrame& frame)>
      on_match;
};

struct EstimationResult {
  std::map<DroneId, std::vector<EstimateRecord>> estimates;  // logged, per observer
  /// The optimized estimate at every frame where the observer ran a solve.
  std::map<DroneId, std::vector<EstimateRecord>> solve_estimates;
  std::map<DroneId, std::vector<SolveStat>> solves;
  std::map<DroneId, MatchStats> matching;
};

/// Broadcasts the measurement stream through the simulated channel and runs
/// one estimator per observer (concurrently when `parallel`).
EstimationResult estimate(const ExperimentConfig& config,
                          std::span<const MeasurementFrame> measurements, std::uint64_t seed,
                          const RunHooks& hooks = {}, bool parallel = true);

/// One row per (observer, target) with at least one initialized estimate.
RmseReport evaluate(const std::map<DroneId, std::vector<EstimateRecord>>& estimates,
                    const GroundTruth& truth);

/// Initialized estimates of one pair as a time series.
std::vector<TimedPose> series(const std::map<DroneId, std::vector<EstimateRecord>>& estimates,
                              DroneId observer, DroneId target);

struct RunResult {
  std::uint64_t seed = 0;
  Simulation sim;
  EstimationResult est;
  RmseReport report;
};

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RunHooks& hooks = {}, bool parallel = true);

void write_rmse_csv(std::ostream& out, const RmseReport& report);

/// measurements.jsonl, truth.jsonl, estimates.jsonl, rmse.csv and one
/// plot_<observer>_<target>.csv per pair.
void write_artifacts(const RunResult& run, const std::filesystem::path& dir);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double x = 0.0, y = 0.0, z = 0.0, yaw_deg = 0.0;  // means over pairs

  double translation() const { return (x + y + z) / 3.0; }
};

/// Full, without-UWB and without-detection runs on every configured seed.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config);

/// Per-variant means over seeds followed by the per-seed rows.
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace swarmloc
