#include "swarmloc/framing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>

namespace swarmloc {

Frame assemble(double t, std::span<const Packet> packets) {
  Frame f;
  f.t = t;
  for (const Packet& p : packets) {
    std::visit(
        [&](const auto& payload) {
          using T = std::decay_t<decltype(payload)>;
          if constexpr (std::is_same_v<T, VioMeas>) {
            f.vio[p.sender] = payload.pose;
          } else if constexpr (std::is_same_v<T, DistancePayload>) {
            for (const DistanceMeas& d : payload.ranges) f.distances[d.pair] = d.range;
          } else {
            f.detections.insert(f.detections.end(), payload.detections.begin(),
                                payload.detections.end());
          }
        },
        p.payload);
  }
  f.labels.assign(f.detections.size(), std::nullopt);
  return f;
}

std::int64_t FrameAssembler::key(double stamp) const {
  return static_cast<std::int64_t>(std::llround(stamp / period_));
}

void FrameAssembler::add(const Packet& packet) {
  const std::int64_t k = key(packet.stamp);
  if (last_released_ && k <= *last_released_) {
    ++late_packets_;
    return;
  }
  pending_[k].push_back(packet);
}

std::vector<Frame> FrameAssembler::pop_ready(double up_to) {
  std::vector<Frame> out;
  const std::int64_t limit = key(up_to);
  while (!pending_.empty() && pending_.begin()->first <= limit) {
    auto node = pending_.extract(pending_.begin());
    const auto& packets = node.mapped();
    out.push_back(assemble(packets.front().stamp, packets));
    last_released_ = node.key();
  }
  return out;
}

void KeyframeParams::validate() const {
  if (!(td1 > 0.0 && td1 < td0)) {
    throw std::invalid_argument("keyframe thresholds must satisfy 0 < td1 < td0");
  }
}

std::string_view to_string(KeyframeReason reason) {
  switch (reason) {
    case KeyframeReason::kNone: return "none";
    case KeyframeReason::kFirstOrNewDrone: return "first/new drones";
    case KeyframeReason::kDisplacementTd0: return "displacement > td0";
    case KeyframeReason::kDisplacementTd1WithDetection: return "displacement > td1 with detection";
  }
  return "unknown";
}

SlidingWindow::SlidingWindow(std::size_t max_size) : max_size_(max_size) {
  if (max_size_ == 0) throw std::invalid_argument("sliding window size must be > 0");
}

std::optional<Frame> SlidingWindow::push(Frame kf) {
  if (!keyframes_.empty() && !(kf.t > keyframes_.back().t)) {
    throw std::invalid_argument("keyframe pushed out of order");
  }
  keyframes_.push_back(std::move(kf));
  if (keyframes_.size() > max_size_) {
    Frame evicted = std::move(keyframes_.front());
    keyframes_.pop_front();
    return evicted;
  }
  return std::nullopt;
}

bool SlidingWindow::contains_drone(DroneId id) const {
  return std::any_of(keyframes_.begin(), keyframes_.end(),
                     [id](const Frame& f) { return f.has_drone(id); });
}

std::vector<DroneId> SlidingWindow::drones() const {
  std::set<DroneId> ids;
  for (const Frame& f : keyframes_) {
    for (const auto& [id, pose] : f.vio) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

std::optional<std::size_t> SlidingWindow::previous_with(DroneId id, std::size_t index) const {
  for (std::size_t a = index; a-- > 0;) {
    if (keyframes_[a].has_drone(id)) return a;
  }
  return std::nullopt;
}

std::optional<Pose4> SlidingWindow::vio_delta(DroneId id, std::size_t index) const {
  if (index >= keyframes_.size() || !keyframes_[index].has_drone(id)) return std::nullopt;
  const auto prev = previous_with(id, index);
  if (!prev) return std::nullopt;
  return relative(keyframes_[*prev].vio.at(id), keyframes_[index].vio.at(id));
}

double SlidingWindow::path_length(DroneId id) const {
  double length = 0.0;
  const Pose4* last = nullptr;
  for (const Frame& f : keyframes_) {
    auto it = f.vio.find(id);
    if (it == f.vio.end()) continue;
    if (last != nullptr) length += (it->second.t - last->t).norm();
    last = &it->second;
  }
  return length;
}

KeyframeDecision is_keyframe(const Frame& frame, const SlidingWindow& window,
                             const KeyframeParams& params, DroneId observer) {
  if (window.empty()) return {true, KeyframeReason::kFirstOrNewDrone};
  for (const auto& [id, pose] : frame.vio) {
    if (!window.contains_drone(id)) return {true, KeyframeReason::kFirstOrNewDrone};
  }

  auto here = frame.vio.find(observer);
  if (here == frame.vio.end()) return {};
  const auto last = window.previous_with(observer, window.size());
  if (!last) return {true, KeyframeReason::kFirstOrNewDrone};
  const double displacement = (here->second.t - window[*last].vio.at(observer).t).norm();

  if (displacement > params.td0) return {true, KeyframeReason::kDisplacementTd0};
  if (displacement > params.td1) {
    bool involved = false;
    for (std::size_t i = 0; i < frame.detections.size() && !involved; ++i) {
      involved = frame.detections[i].observer == observer || frame.label(i) == observer;
    }
    if (involved) return {true, KeyframeReason::kDisplacementTd1WithDetection};
  }
  return {};
}

std::optional<std::size_t> PruningPlan::drone_index(DroneId id) const {
  auto it = std::lower_bound(drones.begin(), drones.end(), id);
  if (it == drones.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - drones.begin());
}

int PruningPlan::slot_of(DroneId id, std::size_t keyframe) const {
  const auto d = drone_index(id);
  if (!d || keyframe >= slot[*d].size()) return -1;
  return slot[*d][keyframe];
}

bool PruningPlan::is_hovering(DroneId id, std::size_t keyframe) const {
  const auto d = drone_index(id);
  return d && keyframe < hovering[*d].size() && hovering[*d][keyframe];
}

PruningPlan annotate_hover_and_prune(const SlidingWindow& window, DroneId observer,
                                     const HoverThresholds& thresholds, bool enabled) {
  PruningPlan plan;
  plan.drones = window.drones();
  const std::size_t m = window.size();
  plan.slot.assign(plan.drones.size(), std::vector<int>(m, -1));
  plan.hovering.assign(plan.drones.size(), std::vector<bool>(m, false));

  for (std::size_t d = 0; d < plan.drones.size(); ++d) {
    const DroneId id = plan.drones[d];
    std::optional<std::size_t> prev;
    std::optional<std::size_t> slot_start;  // first keyframe of the current slot
    for (std::size_t a = 0; a < m; ++a) {
      auto it = window[a].vio.find(id);
      if (it == window[a].vio.end()) continue;
      plan.variables_before += 4;
      bool hover = false;
      if (prev) {
        ++plan.vio_residuals_before;
        // Measured against the slot's first keyframe so that slow drift
        // cannot chain a moving drone into one slot.
        const Pose4& start = window[*slot_start].vio.at(id);
        hover = enabled && id != observer &&
                (it->second.t - start.t).norm() < thresholds.translation &&
                std::abs(wrap_angle(it->second.yaw() - start.yaw())) < thresholds.yaw;
      }
      if (hover) {
        plan.slot[d][a] = plan.slot[d][*prev];
        plan.hovering[d][a] = true;
        plan.hovering[d][*prev] = true;
        plan.dropped_vio.insert({id, a});
      } else {
        plan.slot[d][a] = plan.num_slots++;
        slot_start = a;
        if (prev) ++plan.vio_residuals_after;
      }
      prev = a;
    }
  }
  plan.variables_after = 4 * static_cast<std::size_t>(plan.num_slots);

  for (std::size_t a = 0; a < m; ++a) {
    for (const auto& [pair, range] : window[a].distances) {
      if (plan.slot_of(pair.first, a) < 0 || plan.slot_of(pair.second, a) < 0) continue;
      ++plan.distance_residuals_before;
      const bool drop = enabled && !pair.involves(observer) &&
                        plan.is_hovering(pair.first, a) && plan.is_hovering(pair.second, a);
      if (drop) {
        plan.dropped_distances.insert({pair, a});
      } else {
        ++plan.distance_residuals_after;
      }
    }
  }
  return plan;
}

}  // namespace swarmloc
