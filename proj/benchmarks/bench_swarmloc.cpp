#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "swarmloc/estimator.hpp"
#include "swarmloc/matcher.hpp"
#include "swarmloc/runner.hpp"
#include "swarmloc/scenario.hpp"

using namespace swarmloc;

namespace {

ExperimentConfig load(const std::string& name) {
  return load_config((std::filesystem::path(SWARMLOC_SCENARIO_DIR) / (name + ".json")).string());
}

Frame frame_of(const MeasurementFrame& m) {
  Frame f;
  f.t = m.t;
  for (std::size_t i = 0; i < m.vio.size(); ++i) f.vio[static_cast<DroneId>(i)] = m.vio[i].pose;
  for (const DistanceMeas& d : m.distances) f.distances[d.pair] = d.range;
  f.detections = m.detections;
  for (DroneId id : m.detection_truth) {
    f.labels.push_back(id >= 0 ? std::optional<DroneId>(id) : std::nullopt);
  }
  return f;
}

struct WindowCase {
  SlidingWindow window;
  SwarmState truth;
  EstimatorConfig config;
};

// Observer 0's keyframe window of `size` keyframes with truth labels, and the
// true poses in its odometry frame.
WindowCase make_window(const std::string& scenario, std::size_t size) {
  ExperimentConfig c = load(scenario);
  c.duration = 120.0;
  const Simulation sim = simulate(c, 1);
  WindowCase w{SlidingWindow(size), {}, effective_estimator(c, 1)};
  for (const MeasurementFrame& m : sim.measurements) {
    Frame f = frame_of(m);
    if (is_keyframe(f, w.window, w.config.keyframe, 0).keyframe) w.window.push(std::move(f));
  }
  const auto& gt = sim.truth;
  for (const Frame& f : w.window.keyframes()) {
    const auto k = static_cast<std::size_t>(std::llround(f.t / gt.dt));
    for (const auto& [id, vio] : f.vio) {
      w.truth.poses[id][f.t] = relative(gt.poses[0][0], gt.poses[id][k]);
    }
  }
  for (std::size_t i = 0; i < gt.num_drones(); ++i) w.truth.initialized.insert(static_cast<DroneId>(i));
  return w;
}

// Truth perturbed by a few centimeters, as the warm start of a running solve.
SwarmState perturbed(const SwarmState& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  SwarmState out = s;
  for (auto& [id, poses] : out.poses) {
    if (id == 0) continue;
    for (auto& [t, p] : poses) p = boxplus(p, Tangent4({n(rng), n(rng), n(rng)}, 0.1 * n(rng)));
  }
  return out;
}

void solve_window(benchmark::State& state, const WindowCase& w, bool pruning) {
  const PruningPlan plan = annotate_hover_and_prune(w.window, 0, w.config.hover, pruning);
  ProblemSpec spec;
  for (DroneId id : w.window.drones()) {
    if (id != 0) spec.free_drones.insert(id);
  }
  spec.weights = w.config.weights;
  const SwarmState start = perturbed(w.truth, 3);
  int variables = 0;
  for (auto _ : state) {
    BuiltProblem b = build_problem(w.window, plan, spec, start);
    variables = b.free_variables;
    benchmark::DoNotOptimize(nls::solve(b.problem, w.config.solver));
  }
  state.counters["free_vars"] = variables;
  state.SetComplexityN(static_cast<benchmark::IterationCount>(w.window.size()));
}

}  // namespace

// Window length sweep; the sparse factorization should keep this close to
// linear in the number of keyframes.
static void BM_SolveWindow(benchmark::State& state) {
  static std::map<std::int64_t, WindowCase> cache;
  const auto m = state.range(0);
  if (!cache.contains(m)) cache.emplace(m, make_window("three_drones", static_cast<std::size_t>(m)));
  solve_window(state, cache.at(m), false);
}
BENCHMARK(BM_SolveWindow)->Arg(10)->Arg(25)->Arg(50)->Arg(100)->Arg(200)
    ->Unit(benchmark::kMillisecond)->Complexity();

// Three of five drones hover: pruned against unpruned.
static void BM_SolveHoverWindow(benchmark::State& state) {
  static const WindowCase w = make_window("hover_five", 50);
  solve_window(state, w, state.range(0) != 0);
}
BENCHMARK(BM_SolveHoverWindow)->ArgName("pruned")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Match(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::map<DroneId, Eigen::Vector3d> predicted;
  std::vector<DetectionMeas> detections;
  const MatchParams params;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(4.0 + 2.0 * u(rng), 3.0 * u(rng), u(rng));
    predicted[i + 1] = p;
    DetectionMeas d;
    d.rel_t = p + Eigen::Vector3d(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng));
    d.apparent_size = params.drone_size / d.rel_t.norm();
    detections.push_back(d);
  }
  for (auto _ : state) benchmark::DoNotOptimize(match(detections, predicted, params));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Match)->RangeMultiplier(2)->Range(2, 32)->Complexity();

// One high-rate step of a running estimator, solves included.
static void BM_EstimatorFrame(benchmark::State& state) {
  ExperimentConfig c = load("three_drones");
  c.duration = 20.0;
  const Simulation sim = simulate(c, 1);
  std::vector<Frame> frames;
  for (const MeasurementFrame& m : sim.measurements) {
    Frame f = frame_of(m);
    f.labels.assign(f.detections.size(), std::nullopt);
    frames.push_back(std::move(f));
  }
  for (auto _ : state) {
    RelativeEstimator est(0, effective_estimator(c, 1));
    for (const Frame& f : frames) benchmark::DoNotOptimize(est.process(f));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}
BENCHMARK(BM_EstimatorFrame)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
