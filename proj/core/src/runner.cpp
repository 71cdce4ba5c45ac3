#include "swarmloc/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>

namespace swarmloc {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::uint64_t link_seed(std::uint64_t base, std::uint64_t seed) {
  return base * 0x9e3779b97f4a7c15ULL ^ (seed + 0x632be59bd9b4e019ULL);
}

// Packets drone i sends at step k: its odometry, the ranges it owns (lower
// id of the pair, both radios alive) and its detections.
std::vector<Packet> packets_of(DroneId i, const MeasurementFrame& f,
                               const std::function<bool(DroneId)>& alive) {
  std::vector<Packet> out;
  out.push_back({i, f.t, f.vio.at(static_cast<std::size_t>(i))});
  DistancePayload ranges;
  for (const DistanceMeas& d : f.distances) {
    if (d.pair.first == i && alive(d.pair.second)) ranges.ranges.push_back(d);
  }
  if (!ranges.ranges.empty()) out.push_back({i, f.t, std::move(ranges)});
  DetectionPayload dets;
  for (const DetectionMeas& d : f.detections) {
    if (d.observer == i) dets.detections.push_back(d);
  }
  if (!dets.detections.empty()) out.push_back({i, f.t, std::move(dets)});
  return out;
}

}  // namespace

Simulation simulate(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  NoiseConfig noise = config.noise;
  noise.rng_seed = seed;
  Simulation sim;
  sim.truth = sample_truth(config.trajectories, config.dt, config.duration);
  sim.measurements = simulate_measurements(sim.truth, noise);
  return sim;
}

EstimationResult estimate(const ExperimentConfig& config,
                          std::span<const MeasurementFrame> measurements, std::uint64_t seed,
                          const RunHooks& hooks, bool parallel) {
  config.validate();
  const double dt = config.dt;
  const auto n_drones = static_cast<DroneId>(config.num_drones());
  const std::vector<DroneId> observers = config.active_observers();

  std::map<DroneId, double> fail_at;
  for (const Failure& f : config.failures) {
    auto [it, inserted] = fail_at.emplace(f.drone, f.at);
    if (!inserted) it->second = std::min(it->second, f.at);
  }
  auto alive_at = [&](DroneId id, double t) {
    auto it = fail_at.find(id);
    return it == fail_at.end() || t < it->second;
  };

  LinkModel link = config.link;
  link.period = dt;
  link.seed = link_seed(config.link.seed, seed);
  Channel channel(link);
  for (DroneId i = 0; i < n_drones; ++i) channel.register_node(i);

  // The radio does not depend on any estimate, so it is simulated up front.
  const std::size_t n_steps = measurements.size();
  std::map<DroneId, std::vector<std::vector<Packet>>> inbox;
  for (DroneId o : observers) inbox[o].resize(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const MeasurementFrame& f = measurements[k];
    if (f.vio.size() != static_cast<std::size_t>(n_drones)) {
      throw std::invalid_argument("measurements do not match the scenario's drone count");
    }
    auto alive = [&](DroneId id) { return alive_at(id, f.t); };
    for (DroneId i = 0; i < n_drones; ++i) {
      if (!alive(i)) continue;
      for (Packet& p : packets_of(i, f, alive)) {
        channel.broadcast(p);
        if (inbox.contains(i)) inbox[i][k].push_back(std::move(p));
      }
    }
    const Delivery d = channel.step(dt);
    for (DroneId o : observers) {
      const auto& got = d.for_node({o});
      inbox[o][k].insert(inbox[o][k].end(), got.begin(), got.end());
    }
  }

  const auto lag_steps = static_cast<std::size_t>(
      std::ceil((config.link.latency + config.link.jitter) / dt - 1e-9));
  const auto log_every = std::max<long long>(1, std::llround(config.log_period / dt));
  std::mutex hook_mutex;

  struct AgentOut {
    std::vector<EstimateRecord> estimates;
    std::vector<EstimateRecord> solve_estimates;
    std::vector<SolveStat> solves;
    MatchStats matching;
  };

  auto run_agent = [&](DroneId o) {
    AgentOut out;
    RelativeEstimator est(o, effective_estimator(config, seed));
    est.set_match_hook([&](const MatchRecord& rec) {
      const auto k = static_cast<std::size_t>(std::llround(rec.t / dt));
      const MeasurementFrame& f = measurements[std::min(k, n_steps - 1)];
      out.matching.outliers += rec.result.outliers.size();
      for (const Assignment& a : rec.result.assignments) {
        ++out.matching.assignments;
        for (std::size_t j = 0; j < f.detections.size() && j < f.detection_truth.size(); ++j) {
          if (f.detections[j] == a.detection) {
            if (f.detection_truth[j] == a.target) ++out.matching.correct;
            break;
          }
        }
      }
      if (hooks.on_match) {
        std::lock_guard lock(hook_mutex);
        hooks.on_match(o, rec, f);
      }
    });

    for (std::size_t k = 0; k < n_steps + lag_steps; ++k) {
      if (k < n_steps) {
        if (!alive_at(o, measurements[k].t)) break;
        for (const Packet& p : inbox.at(o)[k]) est.ingest(p);
      }
      if (k < lag_steps) continue;
      const double up_to = static_cast<double>(k - lag_steps) * dt + 0.5 * dt;
      const std::size_t solved_before = est.solve_log().size();
      for (const SwarmEstimate& e : est.advance(up_to)) {
        for (std::size_t s = solved_before; s < est.solve_log().size(); ++s) {
          if (std::abs(est.solve_log()[s].t - e.t) < 0.5 * dt) {
            for (const EstimateRecord& r : flatten(e)) out.solve_estimates.push_back(r);
            break;
          }
        }
        if (std::llround(e.t / dt) % log_every != 0) continue;
        for (const EstimateRecord& r : flatten(e)) out.estimates.push_back(r);
      }
    }
    for (const SolveRecord& s : est.solve_log()) {
      out.solves.push_back({s.t, s.report.wall_time_s, s.state_variables, s.free_variables,
                            s.residual_blocks, s.report.iterations, s.report.termination});
    }
    return out;
  };

  std::map<DroneId, AgentOut> outs;
  if (parallel && observers.size() > 1) {
    std::map<DroneId, std::future<AgentOut>> futures;
    for (DroneId o : observers) futures[o] = std::async(std::launch::async, run_agent, o);
    for (auto& [o, fut] : futures) outs[o] = fut.get();
  } else {
    for (DroneId o : observers) outs[o] = run_agent(o);
  }

  EstimationResult result;
  for (auto& [o, out] : outs) {
    result.estimates[o] = std::move(out.estimates);
    result.solve_estimates[o] = std::move(out.solve_estimates);
    result.solves[o] = std::move(out.solves);
    result.matching[o] = out.matching;
  }
  return result;
}

std::vector<TimedPose> series(const std::map<DroneId, std::vector<EstimateRecord>>& estimates,
                              DroneId observer, DroneId target) {
  std::vector<TimedPose> out;
  auto it = estimates.find(observer);
  if (it == estimates.end()) return out;
  for (const EstimateRecord& r : it->second) {
    if (r.target == target && r.initialized) out.push_back({r.t, r.pose});
  }
  return out;
}

RmseReport evaluate(const std::map<DroneId, std::vector<EstimateRecord>>& estimates,
                    const GroundTruth& truth) {
  RmseReport report;
  const auto n = static_cast<DroneId>(truth.num_drones());
  for (const auto& [observer, records] : estimates) {
    for (DroneId target = 0; target < n; ++target) {
      if (target == observer) continue;
      const auto est = series(estimates, observer, target);
      if (est.empty()) continue;
      const auto gt = relative_truth(truth, observer, target);
      try {
        RmseRow row = rmse(est, gt, truth.dt);
        row.observer = observer;
        row.target = target;
        report.rows.push_back(row);
      } catch (const std::runtime_error&) {
        // no time-matched samples for this pair
      }
    }
  }
  return report;
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RunHooks& hooks, bool parallel) {
  RunResult run;
  run.seed = seed;
  run.sim = simulate(config, seed);
  run.est = estimate(config, run.sim.measurements, seed, hooks, parallel);
  run.report = evaluate(run.est.estimates, run.sim.truth);
  return run;
}

void write_rmse_csv(std::ostream& out, const RmseReport& report) {
  out << "observer,target,rmse_x_m,rmse_y_m,rmse_z_m,rmse_yaw_deg,trajectory_length_m,samples\n";
  for (const RmseRow& r : report.rows) {
    out << r.observer << ',' << r.target << ',' << fmt(r.x) << ',' << fmt(r.y) << ','
        << fmt(r.z) << ',' << fmt(r.yaw_deg) << ',' << fmt(r.trajectory_length, "%.3f") << ','
        << r.samples << '\n';
  }
}

void write_artifacts(const RunResult& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("measurements.jsonl");
    write_measurements(f, run.sim.measurements);
  }
  {
    auto f = open("truth.jsonl");
    write_truth(f, run.sim.truth);
  }
  {
    auto f = open("estimates.jsonl");
    for (const auto& [o, recs] : run.est.estimates) write_estimates(f, recs);
  }
  {
    auto f = open("rmse.csv");
    write_rmse_csv(f, run.report);
  }
  for (const RmseRow& row : run.report.rows) {
    auto f = open("plot_" + std::to_string(row.observer) + "_" + std::to_string(row.target) + ".csv");
    f << "t,est_x,est_y,est_z,est_yaw,true_x,true_y,true_z,true_yaw\n";
    const auto gt = relative_truth(run.sim.truth, row.observer, row.target);
    for (const TimedPose& e : series(run.est.estimates, row.observer, row.target)) {
      const auto k = static_cast<std::size_t>(std::llround(e.t / run.sim.truth.dt));
      if (k >= gt.size()) continue;
      const Pose4& g = gt[k].pose;
      f << fmt(e.t, "%.3f") << ',' << fmt(e.pose.t.x()) << ',' << fmt(e.pose.t.y()) << ','
        << fmt(e.pose.t.z()) << ',' << fmt(e.pose.yaw()) << ',' << fmt(g.t.x()) << ','
        << fmt(g.t.y()) << ',' << fmt(g.t.z()) << ',' << fmt(g.yaw()) << '\n';
    }
  }
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config) {
  struct Variant {
    const char* name;
    bool uwb;
    bool det;
  };
  const Variant variants[] = {
      {"full", true, true}, {"without-uwb", false, true}, {"without-detection", true, false}};
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : config.seeds) {
    const Simulation sim = simulate(config, seed);
    for (const Variant& v : variants) {
      ExperimentConfig c = config;
      c.use_uwb = v.uwb;
      c.use_detection = v.det;
      const RmseReport report = evaluate(estimate(c, sim.measurements, seed).estimates, sim.truth);
      AblationRow row{v.name, seed};
      if (report.rows.empty()) {
        row.x = row.y = row.z = row.yaw_deg = std::numeric_limits<double>::quiet_NaN();
      } else {
        for (const RmseRow& r : report.rows) {
          row.x += r.x;
          row.y += r.y;
          row.z += r.z;
          row.yaw_deg += r.yaw_deg;
        }
        const auto n = static_cast<double>(report.rows.size());
        row.x /= n;
        row.y /= n;
        row.z /= n;
        row.yaw_deg /= n;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "variant,seed,rmse_x_m,rmse_y_m,rmse_z_m,rmse_yaw_deg,rmse_translation_m\n";
  std::vector<std::string> order;
  std::map<std::string, std::pair<AblationRow, int>> sums;
  for (const AblationRow& r : rows) {
    auto [it, inserted] = sums.try_emplace(r.variant, AblationRow{r.variant}, 0);
    if (inserted) order.push_back(r.variant);
    it->second.first.x += r.x;
    it->second.first.y += r.y;
    it->second.first.z += r.z;
    it->second.first.yaw_deg += r.yaw_deg;
    ++it->second.second;
  }
  auto line = [&](const AblationRow& r, const std::string& seed) {
    out << r.variant << ',' << seed << ',' << fmt(r.x) << ',' << fmt(r.y) << ',' << fmt(r.z)
        << ',' << fmt(r.yaw_deg) << ',' << fmt(r.translation()) << '\n';
  };
  for (const std::string& v : order) {
    AblationRow mean = sums[v].first;
    const double n = sums[v].second;
    mean.x /= n;
    mean.y /= n;
    mean.z /= n;
    mean.yaw_deg /= n;
    line(mean, "mean");
  }
  for (const AblationRow& r : rows) line(r, std::to_string(r.seed));
}

}  // namespace swarmloc
