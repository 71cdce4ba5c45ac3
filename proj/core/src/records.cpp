#include "swarmloc/records.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace swarmloc {

using nlohmann::json;

namespace {

json pose_json(const Pose4& p) { return json::array({p.t.x(), p.t.y(), p.t.z(), p.yaw()}); }

Pose4 pose_from(const json& j) {
  return Pose4(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
               j.at(3).get<double>());
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

template <typename F>
void for_each_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<EstimateRecord> flatten(const SwarmEstimate& estimate) {
  std::vector<EstimateRecord> out;
  for (const TargetEstimate& te : estimate.targets) {
    if (te.target == estimate.observer) continue;
    out.push_back({estimate.t, estimate.observer, te.target, te.relative, te.staleness,
                   te.initialized});
  }
  return out;
}

void write_estimates(std::ostream& out, std::span<const EstimateRecord> records) {
  for (const EstimateRecord& r : records) {
    json j = {{"t", r.t},
              {"observer", r.observer},
              {"target", r.target},
              {"x", r.pose.t.x()},
              {"y", r.pose.t.y()},
              {"z", r.pose.t.z()},
              {"yaw", r.pose.yaw()},
              {"staleness", r.staleness},
              {"initialized", r.initialized}};
    out << j.dump() << '\n';
  }
}

std::vector<EstimateRecord> read_estimates(std::istream& in) {
  std::vector<EstimateRecord> out;
  for_each_line(in, [&](const json& j) {
    EstimateRecord r;
    r.t = j.at("t").get<double>();
    r.observer = j.at("observer").get<DroneId>();
    r.target = j.at("target").get<DroneId>();
    r.pose = Pose4(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
                   j.at("yaw").get<double>());
    r.staleness = j.at("staleness").get<double>();
    r.initialized = j.at("initialized").get<bool>();
    out.push_back(r);
  });
  return out;
}

void write_measurements(std::ostream& out, std::span<const MeasurementFrame> frames) {
  for (const MeasurementFrame& f : frames) {
    json vio = json::array();
    for (const VioMeas& v : f.vio) {
      vio.push_back({{"delta", pose_json(v.delta)}, {"pose", pose_json(v.pose)}});
    }
    json dist = json::array();
    for (const DistanceMeas& d : f.distances) {
      dist.push_back({{"i", d.pair.first}, {"j", d.pair.second}, {"range", d.range}});
    }
    json det = json::array();
    for (const DetectionMeas& d : f.detections) {
      det.push_back(
          {{"observer", d.observer}, {"rel", vec_json(d.rel_t)}, {"size", d.apparent_size}});
    }
    json j = {{"t", f.t}, {"vio", vio}, {"distances", dist}, {"detections", det}};
    out << j.dump() << '\n';
  }
}

std::vector<MeasurementFrame> read_measurements(std::istream& in) {
  std::vector<MeasurementFrame> out;
  for_each_line(in, [&](const json& j) {
    MeasurementFrame f;
    f.t = j.at("t").get<double>();
    for (const json& v : j.at("vio")) {
      f.vio.push_back({pose_from(v.at("delta")), pose_from(v.at("pose"))});
    }
    for (const json& d : j.at("distances")) {
      f.distances.push_back(
          {DronePair(d.at("i").get<DroneId>(), d.at("j").get<DroneId>()), d.at("range").get<double>()});
    }
    for (const json& d : j.at("detections")) {
      f.detections.push_back(
          {d.at("observer").get<DroneId>(), vec_from(d.at("rel")), d.at("size").get<double>()});
    }
    out.push_back(std::move(f));
  });
  return out;
}

void write_truth(std::ostream& out, const GroundTruth& truth) {
  out << json{{"dt", truth.dt}, {"drones", truth.num_drones()}}.dump() << '\n';
  for (std::size_t k = 0; k < truth.num_samples(); ++k) {
    json poses = json::array();
    for (const auto& drone : truth.poses) poses.push_back(pose_json(drone[k]));
    out << json{{"t", truth.time(k)}, {"poses", poses}}.dump() << '\n';
  }
}

GroundTruth read_truth(std::istream& in) {
  GroundTruth truth;
  bool header = true;
  for_each_line(in, [&](const json& j) {
    if (header) {
      truth.dt = j.at("dt").get<double>();
      truth.poses.resize(j.at("drones").get<std::size_t>());
      header = false;
      return;
    }
    const json& poses = j.at("poses");
    if (poses.size() != truth.poses.size()) throw std::runtime_error("truth: drone count mismatch");
    for (std::size_t i = 0; i < poses.size(); ++i) truth.poses[i].push_back(pose_from(poses[i]));
  });
  if (header) throw std::runtime_error("truth: missing header");
  return truth;
}

void write_window_snapshot(std::ostream& out, DroneId observer, const SlidingWindow& window,
                           const SwarmState& state) {
  json kfs = json::array();
  for (const Frame& f : window.keyframes()) {
    json poses = json::object();
    for (const auto& [id, vio] : f.vio) {
      json entry = {{"vio", pose_json(vio)}};
      if (auto p = state.pose(id, f.t)) entry["estimate"] = pose_json(*p);
      poses[std::to_string(id)] = entry;
    }
    kfs.push_back({{"t", f.t}, {"drones", poses}, {"distances", f.distances.size()},
                   {"detections", f.detections.size()}});
  }
  out << json{{"observer", observer}, {"keyframes", kfs}}.dump() << '\n';
}

}  // namespace swarmloc
