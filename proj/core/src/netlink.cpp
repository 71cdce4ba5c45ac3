#include "swarmloc/netlink.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace swarmloc {

namespace {
constexpr double kTimeEps = 1e-12;
}

std::string_view payload_kind(const Payload& payload) {
  switch (payload.index()) {
    case 0: return "vio";
    case 1: return "distances";
    case 2: return "detections";
  }
  return "unknown";
}

void LinkModel::validate() const {
  if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) {
    throw std::invalid_argument("loss_prob must lie in [0, 1]");
  }
  if (!(latency >= 0.0) || !(jitter >= 0.0)) {
    throw std::invalid_argument("latency and jitter must be >= 0");
  }
  if (!(period > 0.0)) throw std::invalid_argument("broadcast period must be > 0");
}

const std::vector<Packet>& Delivery::for_node(NodeHandle node) const {
  static const std::vector<Packet> kEmpty;
  auto it = per_node.find(node.id);
  return it == per_node.end() ? kEmpty : it->second;
}

bool Delivery::empty() const {
  return std::all_of(per_node.begin(), per_node.end(),
                     [](const auto& kv) { return kv.second.empty(); });
}

Channel::Channel(LinkModel model) : model_(model), rng_(model.seed) { model_.validate(); }

NodeHandle Channel::register_node(DroneId id) {
  if (is_registered(id)) {
    throw std::invalid_argument("node " + std::to_string(id) + " already registered");
  }
  nodes_.push_back(id);
  in_flight_[id];
  return NodeHandle{id};
}

bool Channel::is_registered(DroneId id) const {
  return std::find(nodes_.begin(), nodes_.end(), id) != nodes_.end();
}

void Channel::broadcast(const Packet& packet) {
  if (!is_registered(packet.sender)) {
    throw std::invalid_argument("broadcast from unregistered node " +
                                std::to_string(packet.sender));
  }
  auto [it, inserted] = last_stamp_.try_emplace(packet.sender, packet.stamp);
  if (!inserted) {
    if (packet.stamp < it->second) {
      throw std::invalid_argument("packet stamp decreased for sender " +
                                  std::to_string(packet.sender));
    }
    it->second = packet.stamp;
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (DroneId receiver : nodes_) {
    if (receiver == packet.sender) continue;
    // Both draws are taken for every copy so the stream does not depend on
    // which copies survive.
    const double u_loss = unif(rng_);
    const double u_jitter = unif(rng_);
    auto& st = stats_[{packet.sender, receiver}];
    ++st.sent;
    if (u_loss < model_.loss_prob) {
      ++st.dropped;
      trace_event("drop", packet, receiver, clock_);
      continue;
    }
    double at = clock_ + model_.latency + model_.jitter * u_jitter;
    auto& last = last_delivery_[{packet.sender, receiver}];
    at = std::max(at, last);
    last = at;
    ++st.pending;
    in_flight_[receiver].push_back({at, next_seq_++, packet});
    trace_event("send", packet, receiver, at);
  }
}

Delivery Channel::step(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  clock_ += dt;
  Delivery out;
  for (auto& [receiver, queue] : in_flight_) {
    auto due_end = std::partition(queue.begin(), queue.end(), [&](const InFlight& f) {
      return f.deliver_at <= clock_ + kTimeEps;
    });
    if (due_end == queue.begin()) continue;
    std::vector<InFlight> due(std::make_move_iterator(queue.begin()),
                              std::make_move_iterator(due_end));
    queue.erase(queue.begin(), due_end);
    std::sort(due.begin(), due.end(), [](const InFlight& a, const InFlight& b) {
      return a.deliver_at != b.deliver_at ? a.deliver_at < b.deliver_at : a.seq < b.seq;
    });
    auto& sink = out.per_node[receiver];
    for (auto& f : due) {
      auto& st = stats_[{f.packet.sender, receiver}];
      --st.pending;
      ++st.delivered;
      trace_event("deliver", f.packet, receiver, f.deliver_at);
      sink.push_back(std::move(f.packet));
    }
  }
  return out;
}

LinkStats Channel::stats(DroneId sender, DroneId receiver) const {
  auto it = stats_.find({sender, receiver});
  return it == stats_.end() ? LinkStats{} : it->second;
}

void Channel::trace_event(std::string_view event, const Packet& p, DroneId receiver,
                          double at) {
  if (trace_ == nullptr) return;
  char line[256];
  std::snprintf(line, sizeof(line),
                "{\"event\":\"%.*s\",\"clock\":%.6f,\"at\":%.6f,\"sender\":%d,"
                "\"receiver\":%d,\"stamp\":%.6f,\"kind\":\"%.*s\"}\n",
                static_cast<int>(event.size()), event.data(), clock_, at, p.sender, receiver,
                p.stamp, static_cast<int>(payload_kind(p.payload).size()),
                payload_kind(p.payload).data());
  *trace_ << line;
}

}  // namespace swarmloc
