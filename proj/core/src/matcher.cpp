#include "swarmloc/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace swarmloc {

std::string_view to_string(OutlierReason reason) {
  switch (reason) {
    case OutlierReason::kGate: return "gate";
    case OutlierReason::kSize: return "size";
    case OutlierReason::kAmbiguous: return "ambiguous";
  }
  return "unknown";
}

std::optional<DroneId> MatchResult::target_of(std::size_t detection_index) const {
  for (const auto& a : assignments) {
    if (a.detection_index == detection_index) return a.target;
  }
  return std::nullopt;
}

double MatchResult::total_disparity() const {
  return std::accumulate(assignments.begin(), assignments.end(), 0.0,
                         [](double s, const Assignment& a) { return s + a.disparity; });
}

// Shortest augmenting path Hungarian algorithm with row/column potentials.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  if (n > m) throw std::invalid_argument("solve_assignment: more rows than columns");
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

double reprojected_size(const DetectionMeas& d) { return d.apparent_size * d.rel_t.norm(); }

MatchResult match(std::span<const DetectionMeas> detections,
                  const std::map<DroneId, Eigen::Vector3d>& predicted,
                  const MatchParams& params) {
  MatchResult result;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const double ratio = reprojected_size(detections[i]) / params.drone_size;
    if (!(std::abs(ratio - 1.0) <= params.size_tol)) {
      result.outliers.push_back({i, detections[i], OutlierReason::kSize});
    } else {
      candidates.push_back(i);
    }
  }

  std::vector<DroneId> targets;
  std::vector<Eigen::Vector3d> positions;
  for (const auto& [id, pos] : predicted) {
    targets.push_back(id);
    positions.push_back(pos);
  }

  const std::size_t nd = candidates.size();
  const std::size_t nt = targets.size();
  Eigen::MatrixXd disparity(nd, nt);
  for (std::size_t r = 0; r < nd; ++r) {
    for (std::size_t c = 0; c < nt; ++c) {
      disparity(r, c) = (detections[candidates[r]].rel_t - positions[c]).norm();
    }
  }

  // Any gated pair costs less than the gate, so with the penalty above the
  // sum of all feasible costs the optimum first maximizes the match count.
  const std::size_t size = std::max(nd, nt);
  const double penalty = params.gate * static_cast<double>(size + 1);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(size, size, penalty);
  for (std::size_t r = 0; r < nd; ++r) {
    for (std::size_t c = 0; c < nt; ++c) {
      if (disparity(r, c) < params.gate) cost(r, c) = disparity(r, c);
    }
  }
  const std::vector<int> col = solve_assignment(cost);

  for (std::size_t r = 0; r < nd; ++r) {
    const std::size_t det = candidates[r];
    const int c = col[r];
    const bool matched = c >= 0 && static_cast<std::size_t>(c) < nt &&
                         disparity(r, c) < params.gate;
    if (!matched) {
      result.outliers.push_back({det, detections[det], OutlierReason::kGate});
      continue;
    }
    bool ambiguous = false;
    if (params.ambiguity_margin > 0.0) {
      for (std::size_t other = 0; other < nt && !ambiguous; ++other) {
        if (static_cast<int>(other) == c) continue;
        ambiguous = disparity(r, other) < params.gate &&
                    disparity(r, other) - disparity(r, c) < params.ambiguity_margin;
      }
    }
    if (ambiguous) {
      result.outliers.push_back({det, detections[det], OutlierReason::kAmbiguous});
    } else {
      result.assignments.push_back({det, detections[det], targets[c], disparity(r, c)});
    }
  }

  auto by_index = [](const auto& a, const auto& b) {
    return a.detection_index < b.detection_index;
  };
  std::sort(result.assignments.begin(), result.assignments.end(), by_index);
  std::sort(result.outliers.begin(), result.outliers.end(), by_index);
  return result;
}

namespace {

std::size_t nearest(const Eigen::Vector3d& p, std::span<const DetectionMeas> dets) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const double d = (dets[i].rel_t - p).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::size_t nearest_track(const Eigen::Vector3d& p, const std::vector<Assignment>& tracks) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const double d = (tracks[i].detection.rel_t - p).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

TrackDecision validate_track(const MatchResult& previous,
                             std::span<const DetectionMeas> detections, double overlap_thresh,
                             double gate) {
  const auto& tracks = previous.assignments;
  if (tracks.empty() || detections.empty()) return TrackDecision::kRematch;
  const double radius = overlap_thresh * gate;

  std::vector<bool> claimed(detections.size(), false);
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    const std::size_t d = nearest(tracks[t].detection.rel_t, detections);
    if ((detections[d].rel_t - tracks[t].detection.rel_t).norm() > radius) {
      return TrackDecision::kRematch;
    }
    if (nearest_track(detections[d].rel_t, tracks) != t || claimed[d]) {
      return TrackDecision::kRematch;
    }
    claimed[d] = true;
  }
  const bool all_claimed = std::all_of(claimed.begin(), claimed.end(), [](bool c) { return c; });
  return all_claimed ? TrackDecision::kKeep : TrackDecision::kRematch;
}

std::vector<std::optional<DroneId>> carry_labels(const MatchResult& previous,
                                                 std::span<const DetectionMeas> detections) {
  std::vector<std::optional<DroneId>> labels(detections.size());
  const auto& tracks = previous.assignments;
  if (tracks.empty()) return labels;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (detections.empty()) break;
    const std::size_t d = nearest(tracks[t].detection.rel_t, detections);
    if (nearest_track(detections[d].rel_t, tracks) == t) labels[d] = tracks[t].target;
  }
  return labels;
}

}  // namespace swarmloc
