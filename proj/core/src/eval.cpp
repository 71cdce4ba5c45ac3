#include "swarmloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

namespace swarmloc {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Index of the sample nearest to t, if within tol.
std::optional<std::size_t> nearest(std::span<const TimedPose> series, double t, double tol) {
  auto it = std::lower_bound(series.begin(), series.end(), t,
                             [](const TimedPose& p, double v) { return p.t < v; });
  std::optional<std::size_t> best;
  double best_gap = tol;
  for (auto c : {it, it == series.begin() ? it : std::prev(it)}) {
    if (c == series.end()) continue;
    const double gap = std::abs(c->t - t);
    if (gap <= best_gap) {
      best_gap = gap;
      best = static_cast<std::size_t>(c - series.begin());
    }
  }
  return best;
}

}  // namespace

Alignment align_4dof(std::span<const Eigen::Vector3d> estimated,
                     std::span<const Eigen::Vector3d> truth) {
  if (estimated.size() != truth.size()) throw std::invalid_argument("align_4dof: size mismatch");
  if (estimated.size() < 2) throw std::invalid_argument("align_4dof: need at least 2 pairs");

  const double n = static_cast<double>(estimated.size());
  Eigen::Vector3d mean_e = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_g = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    mean_e += estimated[i];
    mean_g += truth[i];
  }
  mean_e /= n;
  mean_g /= n;

  double s_cos = 0.0, s_sin = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const Eigen::Vector2d e = (estimated[i] - mean_e).head<2>();
    const Eigen::Vector2d g = (truth[i] - mean_g).head<2>();
    s_cos += e.dot(g);
    s_sin += e.x() * g.y() - e.y() * g.x();
    spread += e.squaredNorm();
  }

  Alignment out;
  if (spread < 1e-12 || std::hypot(s_cos, s_sin) < 1e-12) {
    std::cerr << "warning: align_4dof: degenerate horizontal spread, using identity\n";
    out.degenerate = true;
    return out;
  }
  const double yaw = std::atan2(s_sin, s_cos);
  out.transform = Pose4(mean_g - rot_z(yaw) * mean_e, yaw);
  return out;
}

std::vector<TimedPose> relative_truth(const GroundTruth& truth, DroneId observer, DroneId target) {
  const auto& obs = truth.poses.at(static_cast<std::size_t>(observer));
  const auto& tgt = truth.poses.at(static_cast<std::size_t>(target));
  std::vector<TimedPose> out;
  out.reserve(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    out.push_back({truth.time(k), relative(obs[k], tgt[k])});
  }
  return out;
}

const RmseRow* RmseReport::find(DroneId observer, DroneId target) const {
  for (const auto& r : rows) {
    if (r.observer == observer && r.target == target) return &r;
  }
  return nullptr;
}

RmseRow rmse(std::span<const TimedPose> estimates, std::span<const TimedPose> truth,
             double period, const Pose4& alignment) {
  RmseRow row;
  Eigen::Vector3d sq = Eigen::Vector3d::Zero();
  double sq_yaw = 0.0;
  std::optional<Eigen::Vector3d> prev;
  for (const TimedPose& e : estimates) {
    const auto k = nearest(truth, e.t, 0.5 * period);
    if (!k) continue;
    const Pose4 est = compose(alignment, e.pose);
    const Pose4& gt = truth[*k].pose;
    sq += (est.t - gt.t).cwiseAbs2();
    const double dyaw = wrap_angle(est.yaw() - gt.yaw());
    sq_yaw += dyaw * dyaw;
    if (prev) row.trajectory_length += (gt.t - *prev).norm();
    prev = gt.t;
    ++row.samples;
  }
  if (row.samples == 0) throw std::runtime_error("rmse: no time-matched samples");
  const double n = static_cast<double>(row.samples);
  row.x = std::sqrt(sq.x() / n);
  row.y = std::sqrt(sq.y() / n);
  row.z = std::sqrt(sq.z() / n);
  row.yaw_deg = std::sqrt(sq_yaw / n) * kRadToDeg;
  return row;
}

ConsistencyStats cross_agent_consistency(std::span<const TimedPose> k_sees_i,
                                         std::span<const TimedPose> i_sees_k, double period,
                                         double tol_translation, double tol_yaw_deg) {
  ConsistencyStats stats;
  for (const TimedPose& a : k_sees_i) {
    const auto j = nearest(i_sees_k, a.t, 0.5 * period);
    if (!j) continue;
    const Pose4 loop = compose(a.pose, i_sees_k[*j].pose);
    const double et = loop.t.norm();
    const double ey = std::abs(loop.yaw()) * kRadToDeg;
    ++stats.samples;
    if (et <= tol_translation && ey <= tol_yaw_deg) ++stats.within;
    stats.max_translation = std::max(stats.max_translation, et);
    stats.max_yaw_deg = std::max(stats.max_yaw_deg, ey);
  }
  return stats;
}

}  // namespace swarmloc
