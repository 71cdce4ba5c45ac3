#include "swarmloc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace swarmloc {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument(path_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(path_ + "." + key + ": " + e.what());
    }
  }

  void vec3(const std::string& key, Eigen::Vector3d& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    out = to_vec3(j_.at(key), path_ + "." + key);
  }

  void angle_deg(const std::string& key, double& out_rad) {
    double deg = out_rad / kDegToRad;
    get(key, deg);
    out_rad = deg * kDegToRad;
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw std::invalid_argument(path_ + ": unknown key '" + key + "'");
    }
  }

  static Eigen::Vector3d to_vec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument(where + ": expected [x, y, z]");
    try {
      return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    } catch (const json::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

TrajectorySpec parse_trajectory(const json& j, const std::string& path) {
  TrajectorySpec s;
  Section sec(j, path);
  std::string kind = to_string(s.kind);
  sec.get("kind", kind);
  try {
    s.kind = trajectory_kind_from_string(kind);
  } catch (const std::exception& e) {
    throw std::invalid_argument(path + ".kind: " + e.what());
  }
  sec.vec3("center", s.center);
  sec.get("radius", s.radius);
  sec.get("angular_rate", s.angular_rate);
  sec.get("phase", s.phase);
  sec.vec3("amplitude", s.amplitude);
  sec.vec3("frequency", s.frequency);
  sec.vec3("phases", s.phases);
  if (sec.has("waypoints")) {
    const json& w = sec.raw("waypoints");
    if (!w.is_array()) throw std::invalid_argument(path + ".waypoints: expected an array");
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.waypoints.push_back(Section::to_vec3(w[i], path + ".waypoints[" + std::to_string(i) + "]"));
    }
  }
  sec.get("speed", s.speed);
  sec.get("loop", s.loop);
  sec.get("yaw0", s.yaw0);
  sec.get("yaw_rate", s.yaw_rate);
  sec.get("motion_start", s.motion_start);
  if (sec.has("motion_end") && sec.raw("motion_end").is_null()) {
    // null keeps the open-ended default
  } else {
    sec.get("motion_end", s.motion_end);
  }
  sec.finish();
  return s;
}

json trajectory_json(const TrajectorySpec& s) {
  auto v3 = [](const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j = {{"kind", to_string(s.kind)},
            {"center", v3(s.center)},
            {"radius", s.radius},
            {"angular_rate", s.angular_rate},
            {"phase", s.phase},
            {"amplitude", v3(s.amplitude)},
            {"frequency", v3(s.frequency)},
            {"phases", v3(s.phases)},
            {"speed", s.speed},
            {"loop", s.loop},
            {"yaw0", s.yaw0},
            {"yaw_rate", s.yaw_rate},
            {"motion_start", s.motion_start}};
  json w = json::array();
  for (const auto& p : s.waypoints) w.push_back(v3(p));
  j["waypoints"] = w;
  j["motion_end"] = std::isfinite(s.motion_end) ? json(s.motion_end) : json(nullptr);
  return j;
}

void parse_noise(const json& j, NoiseConfig& n) {
  Section sec(j, "noise");
  sec.get("sigma_d", n.sigma_d);
  sec.get("sigma_det", n.sigma_det);
  sec.get("sigma_vio_t", n.sigma_vio_t);
  sec.get("sigma_vio_yaw", n.sigma_vio_yaw);
  sec.get("range_dropout_prob", n.range_dropout_prob);
  sec.angle_deg("fov_half_angle_deg", n.fov_half_angle);
  sec.get("det_max_range", n.det_max_range);
  sec.get("det_miss_prob", n.det_miss_prob);
  sec.get("det_clutter_prob", n.det_clutter_prob);
  sec.get("drone_size", n.drone_size);
  sec.finish();
}

void parse_link(const json& j, LinkModel& l) {
  Section sec(j, "link");
  sec.get("loss_prob", l.loss_prob);
  sec.get("latency", l.latency);
  sec.get("jitter", l.jitter);
  sec.finish();
}

void parse_estimator(const json& j, EstimatorConfig& e) {
  Section sec(j, "estimator");
  sec.get("window_size", e.window_size);
  sec.get("td0", e.keyframe.td0);
  sec.get("td1", e.keyframe.td1);
  sec.get("hover_translation", e.hover.translation);
  sec.angle_deg("hover_yaw_deg", e.hover.yaw);
  sec.get("pruning", e.enable_pruning);
  sec.get("sigma_d", e.weights.sigma_d);
  sec.get("sigma_det", e.weights.sigma_det);
  sec.get("sigma_vio_t", e.weights.sigma_vio_t);
  sec.get("sigma_vio_yaw", e.weights.sigma_vio_yaw);
  sec.get("gate", e.match.gate);
  sec.get("size_tol", e.match.size_tol);
  sec.get("ambiguity_margin", e.match.ambiguity_margin);
  sec.get("overlap_thresh", e.overlap_thresh);
  sec.get("max_match_staleness", e.max_match_staleness);
  sec.get("init_trials", e.init.trials);
  sec.get("s_init", e.init.min_observer_path);
  sec.get("gate_factor", e.init.gate_factor);
  sec.get("min_distances", e.init.min_distances);
  sec.get("magnitude_spread", e.init.magnitude_spread);
  sec.get("divergence_strikes", e.divergence_strikes);
  sec.get("solver_max_iterations", e.solver.max_iterations);
  sec.get("seed", e.seed);
  sec.finish();
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<DroneId> ExperimentConfig::active_observers() const {
  if (!observers.empty()) return observers;
  std::vector<DroneId> all;
  for (std::size_t i = 0; i < trajectories.size(); ++i) all.push_back(static_cast<DroneId>(i));
  return all;
}

void ExperimentConfig::validate() const {
  if (trajectories.size() < 2) throw std::invalid_argument("config: need at least 2 drones");
  if (!(dt > 0.0)) throw std::invalid_argument("config: dt must be > 0");
  if (!(duration >= dt)) throw std::invalid_argument("config: duration must be >= dt");
  if (!use_uwb && !use_detection) {
    throw std::invalid_argument("config: disabling both UWB and detection is not allowed");
  }
  if (!(log_period > 0.0)) throw std::invalid_argument("config: log_period must be > 0");
  if (seeds.empty()) throw std::invalid_argument("config: need at least one seed");
  const auto n = static_cast<DroneId>(trajectories.size());
  for (DroneId o : observers) {
    if (o < 0 || o >= n) throw std::invalid_argument("config: observer id out of range");
  }
  for (const Failure& f : failures) {
    if (f.drone < 0 || f.drone >= n) throw std::invalid_argument("config: failure drone out of range");
    if (!(f.at >= 0.0)) throw std::invalid_argument("config: failure time must be >= 0");
  }
  noise.validate();
  link.validate();
  effective_estimator(*this, seeds.front()).validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  Section sec(j, "config");
  sec.get("name", c.name);
  sec.get("dt", c.dt);
  sec.get("duration", c.duration);
  if (sec.has("drones")) {
    const json& d = sec.raw("drones");
    if (!d.is_array()) throw std::invalid_argument("config.drones: expected an array");
    for (std::size_t i = 0; i < d.size(); ++i) {
      c.trajectories.push_back(parse_trajectory(d[i], "drones[" + std::to_string(i) + "]"));
    }
  }
  if (sec.has("noise")) parse_noise(sec.raw("noise"), c.noise);
  // Estimator weights follow the simulated noise unless set explicitly.
  if (c.noise.sigma_d > 0.0) c.estimator.weights.sigma_d = c.noise.sigma_d;
  if (c.noise.sigma_det > 0.0) c.estimator.weights.sigma_det = c.noise.sigma_det;
  if (c.noise.sigma_vio_t > 0.0) c.estimator.weights.sigma_vio_t = c.noise.sigma_vio_t;
  if (c.noise.sigma_vio_yaw > 0.0) c.estimator.weights.sigma_vio_yaw = c.noise.sigma_vio_yaw;
  if (sec.has("link")) parse_link(sec.raw("link"), c.link);
  if (sec.has("estimator")) parse_estimator(sec.raw("estimator"), c.estimator);
  if (sec.has("failures")) {
    for (const json& f : sec.raw("failures")) {
      Failure fail;
      Section fs(f, "failures[]");
      fs.get("drone", fail.drone);
      fs.get("at", fail.at);
      fs.finish();
      c.failures.push_back(fail);
    }
  }
  sec.get("seeds", c.seeds);
  sec.get("observers", c.observers);
  sec.get("use_uwb", c.use_uwb);
  sec.get("use_detection", c.use_detection);
  sec.get("log_period", c.log_period);
  sec.get("output_dir", c.output_dir);
  sec.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  json drones = json::array();
  for (const auto& t : c.trajectories) drones.push_back(trajectory_json(t));
  const NoiseConfig& n = c.noise;
  const EstimatorConfig& e = c.estimator;
  json failures = json::array();
  for (const Failure& f : c.failures) failures.push_back({{"drone", f.drone}, {"at", f.at}});
  json j = {
      {"name", c.name},
      {"dt", c.dt},
      {"duration", c.duration},
      {"drones", drones},
      {"noise",
       {{"sigma_d", n.sigma_d},
        {"sigma_det", n.sigma_det},
        {"sigma_vio_t", n.sigma_vio_t},
        {"sigma_vio_yaw", n.sigma_vio_yaw},
        {"range_dropout_prob", n.range_dropout_prob},
        {"fov_half_angle_deg", n.fov_half_angle / kDegToRad},
        {"det_max_range", n.det_max_range},
        {"det_miss_prob", n.det_miss_prob},
        {"det_clutter_prob", n.det_clutter_prob},
        {"drone_size", n.drone_size}}},
      {"link", {{"loss_prob", c.link.loss_prob}, {"latency", c.link.latency}, {"jitter", c.link.jitter}}},
      {"estimator",
       {{"window_size", e.window_size},
        {"td0", e.keyframe.td0},
        {"td1", e.keyframe.td1},
        {"hover_translation", e.hover.translation},
        {"hover_yaw_deg", e.hover.yaw / kDegToRad},
        {"pruning", e.enable_pruning},
        {"sigma_d", e.weights.sigma_d},
        {"sigma_det", e.weights.sigma_det},
        {"sigma_vio_t", e.weights.sigma_vio_t},
        {"sigma_vio_yaw", e.weights.sigma_vio_yaw},
        {"gate", e.match.gate},
        {"size_tol", e.match.size_tol},
        {"ambiguity_margin", e.match.ambiguity_margin},
        {"overlap_thresh", e.overlap_thresh},
        {"max_match_staleness", e.max_match_staleness},
        {"init_trials", e.init.trials},
        {"s_init", e.init.min_observer_path},
        {"gate_factor", e.init.gate_factor},
        {"min_distances", e.init.min_distances},
        {"magnitude_spread", e.init.magnitude_spread},
        {"divergence_strikes", e.divergence_strikes},
        {"solver_max_iterations", e.solver.max_iterations},
        {"seed", e.seed}}},
      {"failures", failures},
      {"seeds", c.seeds},
      {"observers", c.observers},
      {"use_uwb", c.use_uwb},
      {"use_detection", c.use_detection},
      {"log_period", c.log_period},
      {"output_dir", c.output_dir}};
  return j.dump(2);
}

EstimatorConfig effective_estimator(const ExperimentConfig& config, std::uint64_t seed) {
  EstimatorConfig e = config.estimator;
  e.families.distance = config.use_uwb;
  e.families.detection = config.use_detection;
  e.period = config.dt;
  e.weights.vio_step = config.dt;
  e.match.drone_size = config.noise.drone_size;
  e.seed = mix(config.estimator.seed, seed);
  return e;
}

}  // namespace swarmloc
