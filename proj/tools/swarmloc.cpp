// Command-line front end: simulate, estimate, evaluate, run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swarmloc/records.hpp"
#include "swarmloc/runner.hpp"
#include "swarmloc/scenario.hpp"

namespace fs = std::filesystem;
using namespace swarmloc;

namespace {

// Flags that override fields of the scenario file.
struct Overrides {
  std::optional<double> duration, dt, log_period;
  std::optional<std::size_t> window;
  std::optional<double> td0, td1;
  std::optional<double> sigma_d, sigma_det, sigma_vio_t, sigma_vio_yaw;
  std::optional<double> loss, latency, jitter;
  std::vector<std::uint64_t> seeds;
  bool no_uwb = false;
  bool no_detection = false;
  bool no_pruning = false;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--duration", duration, "Simulated seconds");
    app->add_option("--dt", dt, "Simulation step, seconds");
    app->add_option("--log-period", log_period, "Seconds between logged estimates");
    app->add_option("--window", window, "Sliding window size in keyframes");
    app->add_option("--td0", td0, "Keyframe displacement threshold, meters");
    app->add_option("--td1", td1, "Keyframe threshold with a detection, meters");
    app->add_option("--sigma-d", sigma_d, "UWB range noise, meters");
    app->add_option("--sigma-det", sigma_det, "Detection noise, meters");
    app->add_option("--sigma-vio-t", sigma_vio_t, "Odometry translation noise per step");
    app->add_option("--sigma-vio-yaw", sigma_vio_yaw, "Odometry yaw noise per step, radians");
    app->add_option("--loss", loss, "Packet loss probability");
    app->add_option("--latency", latency, "Link latency, seconds");
    app->add_option("--jitter", jitter, "Link jitter, seconds");
    app->add_option("--seed", seeds, "Seed(s); replaces the scenario's list");
    app->add_flag("--no-uwb", no_uwb, "Drop UWB distance residuals");
    app->add_flag("--no-detection", no_detection, "Drop detection residuals");
    app->add_flag("--no-pruning", no_pruning, "Disable hover pruning");
    app->add_option("-o,--out", out, "Output directory");
  }

  void apply(ExperimentConfig& c) const {
    if (duration) c.duration = *duration;
    if (dt) c.dt = *dt;
    if (log_period) c.log_period = *log_period;
    if (window) c.estimator.window_size = *window;
    if (td0) c.estimator.keyframe.td0 = *td0;
    if (td1) c.estimator.keyframe.td1 = *td1;
    if (sigma_d) c.noise.sigma_d = *sigma_d;
    if (sigma_det) c.noise.sigma_det = *sigma_det;
    if (sigma_vio_t) c.noise.sigma_vio_t = *sigma_vio_t;
    if (sigma_vio_yaw) c.noise.sigma_vio_yaw = *sigma_vio_yaw;
    if (loss) c.link.loss_prob = *loss;
    if (latency) c.link.latency = *latency;
    if (jitter) c.link.jitter = *jitter;
    if (!seeds.empty()) c.seeds = seeds;
    if (no_uwb) c.use_uwb = false;
    if (no_detection) c.use_detection = false;
    if (no_pruning) c.estimator.enable_pruning = false;
    if (!out.empty()) c.output_dir = out;
    c.validate();
  }
};

ExperimentConfig load(const std::string& path, const Overrides& o) {
  ExperimentConfig c = load_config(path);
  o.apply(c);
  return c;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  return f;
}

fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  fs::path dir = c.output_dir;
  if (c.seeds.size() > 1) dir /= "seed_" + std::to_string(seed);
  return dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative state estimation for simulated aerial swarms"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* sim = app.add_subcommand("simulate", "Scenario to measurement and truth logs");
  sim->add_option("-c,--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  overrides.add_to(sim);

  std::string meas_path, est_path, truth_path;
  bool live = false;
  auto* est = app.add_subcommand("estimate", "Measurement log (or live simulation) to estimate log");
  est->add_option("-c,--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  est->add_option("-m,--measurements", meas_path, "Measurement log from 'simulate'");
  est->add_flag("--live", live, "Simulate the measurements instead of reading a log");
  overrides.add_to(est);

  std::string rmse_path;
  auto* ev = app.add_subcommand("evaluate", "Estimate log plus truth to RMSE table");
  ev->add_option("-e,--estimates", est_path, "Estimate log")->required()->check(CLI::ExistingFile);
  ev->add_option("-t,--truth", truth_path, "Truth log")->required()->check(CLI::ExistingFile);
  ev->add_option("-o,--out", rmse_path, "RMSE CSV (default: stdout)");

  bool ablation = false;
  auto* run = app.add_subcommand("run", "Simulate, estimate and evaluate end to end");
  run->add_option("-c,--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_flag("--ablation", ablation, "Also run without UWB and without detection");
  overrides.add_to(run);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const ExperimentConfig c = load(config_path, overrides);
      for (std::uint64_t seed : c.seeds) {
        const Simulation s = simulate(c, seed);
        const fs::path dir = seed_dir(c, seed);
        auto m = open_out(dir / "measurements.jsonl");
        write_measurements(m, s.measurements);
        auto t = open_out(dir / "truth.jsonl");
        write_truth(t, s.truth);
        std::cout << "wrote " << dir.string() << " (" << s.measurements.size() << " frames)\n";
      }
    } else if (*est) {
      const ExperimentConfig c = load(config_path, overrides);
      if (meas_path.empty() == !live) {
        std::cerr << "estimate: give exactly one of --measurements and --live\n";
        return 2;
      }
      for (std::uint64_t seed : c.seeds) {
        std::vector<MeasurementFrame> frames;
        if (live) {
          frames = simulate(c, seed).measurements;
        } else {
          auto in = open_in(meas_path);
          frames = read_measurements(in);
        }
        const EstimationResult r = estimate(c, frames, seed);
        const fs::path dir = seed_dir(c, seed);
        auto out = open_out(dir / "estimates.jsonl");
        for (const auto& [o, recs] : r.estimates) write_estimates(out, recs);
        std::cout << "wrote " << (dir / "estimates.jsonl").string() << '\n';
        if (!live) break;  // a recorded log holds one seed
      }
    } else if (*ev) {
      auto ein = open_in(est_path);
      auto tin = open_in(truth_path);
      std::map<DroneId, std::vector<EstimateRecord>> by_observer;
      for (const EstimateRecord& r : read_estimates(ein)) by_observer[r.observer].push_back(r);
      const GroundTruth truth = read_truth(tin);
      const RmseReport report = evaluate(by_observer, truth);
      if (rmse_path.empty()) {
        write_rmse_csv(std::cout, report);
      } else {
        auto out = open_out(rmse_path);
        write_rmse_csv(out, report);
      }
    } else if (*run) {
      const ExperimentConfig c = load(config_path, overrides);
      for (std::uint64_t seed : c.seeds) {
        const RunResult r = run_experiment(c, seed);
        const fs::path dir = seed_dir(c, seed);
        write_artifacts(r, dir);
        std::cout << "seed " << seed << " -> " << dir.string() << '\n';
        write_rmse_csv(std::cout, r.report);
      }
      if (ablation) {
        const auto rows = run_ablation(c);
        auto out = open_out(fs::path(c.output_dir) / "ablation.csv");
        write_ablation_csv(out, rows);
        write_ablation_csv(std::cout, rows);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
