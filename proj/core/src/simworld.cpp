#include "swarmloc/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace swarmloc {

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kHover: return "hover";
    case TrajectoryKind::kCircle: return "circle";
    case TrajectoryKind::kLissajous: return "lissajous";
    case TrajectoryKind::kWaypointLinear: return "waypoint-linear";
  }
  return "unknown";
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "hover") return TrajectoryKind::kHover;
  if (name == "circle") return TrajectoryKind::kCircle;
  if (name == "lissajous") return TrajectoryKind::kLissajous;
  if (name == "waypoint-linear" || name == "waypoint_linear" || name == "waypoints") {
    return TrajectoryKind::kWaypointLinear;
  }
  throw std::invalid_argument("unknown trajectory kind: " + name);
}

namespace {

Eigen::Vector3d waypoint_position(const TrajectorySpec& spec, double tau) {
  const auto& wp = spec.waypoints;
  if (wp.empty()) return spec.center;
  if (wp.size() == 1) return wp.front();

  std::vector<double> seg_len;
  const std::size_t n_seg = spec.loop ? wp.size() : wp.size() - 1;
  double total = 0.0;
  for (std::size_t s = 0; s < n_seg; ++s) {
    const double len = (wp[(s + 1) % wp.size()] - wp[s]).norm();
    seg_len.push_back(len);
    total += len;
  }
  if (total <= 0.0) return wp.front();

  double arc = spec.speed * tau;
  if (spec.loop) {
    arc = std::fmod(arc, total);
  } else if (arc >= total) {
    return wp.back();
  }
  for (std::size_t s = 0; s < n_seg; ++s) {
    if (arc <= seg_len[s] || s + 1 == n_seg) {
      const double frac = seg_len[s] > 0.0 ? std::min(arc / seg_len[s], 1.0) : 0.0;
      return wp[s] + frac * (wp[(s + 1) % wp.size()] - wp[s]);
    }
    arc -= seg_len[s];
  }
  return wp.back();
}

}  // namespace

Pose4 TrajectorySpec::pose_at(double t) const {
  const double tau = std::clamp(t, motion_start, motion_end) - motion_start;
  Eigen::Vector3d p = center;
  switch (kind) {
    case TrajectoryKind::kHover:
      break;
    case TrajectoryKind::kCircle: {
      const double a = angular_rate * tau + phase;
      p += radius * Eigen::Vector3d(std::cos(a), std::sin(a), 0.0);
      break;
    }
    case TrajectoryKind::kLissajous:
      for (int i = 0; i < 3; ++i) {
        p[i] += amplitude[i] * std::sin(frequency[i] * tau + phases[i]);
      }
      break;
    case TrajectoryKind::kWaypointLinear:
      p = waypoint_position(*this, tau);
      break;
  }
  return {p, yaw0 + yaw_rate * tau};
}

double TrajectorySpec::max_speed() const {
  switch (kind) {
    case TrajectoryKind::kHover: return 0.0;
    case TrajectoryKind::kCircle: return std::abs(radius * angular_rate);
    case TrajectoryKind::kLissajous: return amplitude.cwiseProduct(frequency).norm();
    case TrajectoryKind::kWaypointLinear: return std::abs(speed);
  }
  return 0.0;
}

NoiseConfig NoiseConfig::noiseless() {
  NoiseConfig n;
  n.sigma_d = 0.0;
  n.sigma_det = 0.0;
  n.sigma_vio_t = 0.0;
  n.sigma_vio_yaw = 0.0;
  return n;
}

void NoiseConfig::validate() const {
  auto check_sigma = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be a finite value >= 0");
    }
  };
  auto check_prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
  };
  check_sigma(sigma_d, "sigma_d");
  check_sigma(sigma_det, "sigma_det");
  check_sigma(sigma_vio_t, "sigma_vio_t");
  check_sigma(sigma_vio_yaw, "sigma_vio_yaw");
  check_prob(range_dropout_prob, "range_dropout_prob");
  check_prob(det_miss_prob, "det_miss_prob");
  check_prob(det_clutter_prob, "det_clutter_prob");
  if (!(fov_half_angle > 0.0 && fov_half_angle <= std::numbers::pi)) {
    throw std::invalid_argument("fov_half_angle must lie in (0, pi]");
  }
  if (!(det_max_range > 0.0)) throw std::invalid_argument("det_max_range must be > 0");
  if (!(drone_size > 0.0)) throw std::invalid_argument("drone_size must be > 0");
}

std::mt19937_64 make_engine(std::uint64_t seed, NoiseStream stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

GroundTruth sample_truth(const std::vector<TrajectorySpec>& specs, double dt, double duration) {
  if (specs.empty()) throw std::invalid_argument("sample_truth: empty trajectory list");
  if (!(dt > 0.0)) throw std::invalid_argument("sample_truth: dt must be > 0");
  if (!(duration >= dt)) throw std::invalid_argument("sample_truth: duration must be >= dt");

  const auto n_samples = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  GroundTruth gt;
  gt.dt = dt;
  gt.poses.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    gt.poses[i].reserve(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
      gt.poses[i].push_back(specs[i].pose_at(gt.time(k)));
    }
  }
  return gt;
}

std::vector<VioMeas> gen_vio(const std::vector<Pose4>& truth, DroneId drone,
                             const NoiseConfig& noise) {
  std::vector<VioMeas> out;
  if (truth.empty()) return out;
  out.reserve(truth.size());
  out.push_back({Pose4::identity(), Pose4::identity()});

  auto rng = make_engine(noise.rng_seed, NoiseStream::kVio, static_cast<std::uint64_t>(drone));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Pose4 integrated;
  for (std::size_t k = 1; k < truth.size(); ++k) {
    const Pose4 true_delta = relative(truth[k - 1], truth[k]);
    Tangent4 n;
    n.dt = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * noise.sigma_vio_t;
    n.dyaw = gauss(rng) * noise.sigma_vio_yaw;
    const Pose4 z = boxplus(true_delta, n);
    integrated = compose(integrated, z);
    out.push_back({z, integrated});
  }
  return out;
}

std::vector<DistanceMeas> gen_distances(const GroundTruth& truth, const NoiseConfig& noise,
                                        std::size_t k) {
  std::vector<DistanceMeas> out;
  auto rng = make_engine(noise.rng_seed, NoiseStream::kRange, k);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<DroneId>(truth.num_drones());
  for (DroneId i = 0; i < n; ++i) {
    for (DroneId j = i + 1; j < n; ++j) {
      const double u = unif(rng);
      const double g = gauss(rng);
      if (u < noise.range_dropout_prob) continue;
      const double d = (truth.poses[i][k].t - truth.poses[j][k].t).norm();
      out.push_back({DronePair(i, j), std::max(0.0, d + noise.sigma_d * g)});
    }
  }
  return out;
}

bool in_field_of_view(const Eigen::Vector3d& rel, const NoiseConfig& noise) {
  const double range = rel.norm();
  if (range <= 1e-9 || range > noise.det_max_range) return false;
  if (rel.x() <= 0.0) return false;
  const double off_axis = std::atan2(rel.tail<2>().norm(), rel.x());
  return off_axis <= noise.fov_half_angle;
}

DetectionBatch gen_detections(const GroundTruth& truth, const NoiseConfig& noise,
                              std::size_t k) {
  DetectionBatch batch;
  auto rng = make_engine(noise.rng_seed, NoiseStream::kDetection, k);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<DroneId>(truth.num_drones());

  for (DroneId obs = 0; obs < n; ++obs) {
    std::vector<std::pair<DetectionMeas, DroneId>> seen;
    const Pose4& p_obs = truth.poses[obs][k];
    for (DroneId tgt = 0; tgt < n; ++tgt) {
      if (tgt == obs) continue;
      const Eigen::Vector3d rel = relative(p_obs, truth.poses[tgt][k]).t;
      const double u = unif(rng);
      const Eigen::Vector3d g(gauss(rng), gauss(rng), gauss(rng));
      if (!in_field_of_view(rel, noise) || u < noise.det_miss_prob) continue;
      DetectionMeas d;
      d.observer = obs;
      d.rel_t = rel + noise.sigma_det * g;
      d.apparent_size = noise.drone_size / rel.norm();
      seen.emplace_back(d, tgt);
    }

    const double u_clutter = unif(rng);
    if (u_clutter < noise.det_clutter_prob) {
      const double range = 1.0 + unif(rng) * (noise.det_max_range - 1.0);
      const double off_axis = unif(rng) * noise.fov_half_angle;
      const double azimuth = unif(rng) * 2.0 * std::numbers::pi;
      const double wrong_scale = unif(rng) < 0.5 ? 0.2 + 0.3 * unif(rng) : 2.0 + 2.0 * unif(rng);
      DetectionMeas d;
      d.observer = obs;
      d.rel_t = range * Eigen::Vector3d(std::cos(off_axis),
                                        std::sin(off_axis) * std::cos(azimuth),
                                        std::sin(off_axis) * std::sin(azimuth));
      d.apparent_size = wrong_scale * noise.drone_size / range;
      seen.emplace_back(d, -1);
    }

    std::shuffle(seen.begin(), seen.end(), rng);
    for (auto& [d, label] : seen) {
      batch.detections.push_back(d);
      batch.truth_targets.push_back(label);
    }
  }
  return batch;
}

std::vector<MeasurementFrame> simulate_measurements(const GroundTruth& truth,
                                                    const NoiseConfig& noise) {
  noise.validate();
  const std::size_t n = truth.num_drones();
  std::vector<std::vector<VioMeas>> vio(n);
  for (std::size_t i = 0; i < n; ++i) {
    vio[i] = gen_vio(truth.poses[i], static_cast<DroneId>(i), noise);
  }

  std::vector<MeasurementFrame> frames;
  frames.reserve(truth.num_samples());
  for (std::size_t k = 0; k < truth.num_samples(); ++k) {
    MeasurementFrame f;
    f.t = truth.time(k);
    f.vio.reserve(n);
    for (std::size_t i = 0; i < n; ++i) f.vio.push_back(vio[i][k]);
    f.distances = gen_distances(truth, noise, k);
    auto batch = gen_detections(truth, noise, k);
    f.detections = std::move(batch.detections);
    f.detection_truth = std::move(batch.truth_targets);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace swarmloc
