#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "swarmloc/measurements.hpp"

namespace swarmloc {

struct DistancePayload {
  std::vector<DistanceMeas> ranges;
};

struct DetectionPayload {
  std::vector<DetectionMeas> detections;
};

using Payload = std::variant<VioMeas, DistancePayload, DetectionPayload>;

std::string_view payload_kind(const Payload& payload);

struct Packet {
  DroneId sender = 0;
  double stamp = 0.0;  // sender clock, seconds
  Payload payload;
};

struct LinkModel {
  double loss_prob = 0.0;
  double latency = 0.0;  // fixed part, seconds
  double jitter = 0.0;   // uniform extra delay in [0, jitter)
  double period = 0.01;  // broadcast period, seconds
  std::uint64_t seed = 7;

  void validate() const;
};

struct NodeHandle {
  DroneId id = 0;
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t pending = 0;
};

/// Packets released by one step(), grouped by receiving node.
struct Delivery {
  std::map<DroneId, std::vector<Packet>> per_node;

  const std::vector<Packet>& for_node(NodeHandle node) const;
  bool empty() const;
};

/// Simulated broadcast radio shared by all nodes.
///
/// Every broadcast is copied toward each other registered node; each copy is
/// dropped with probability loss_prob or scheduled after latency plus jitter.
/// Delivery times between a sender and a receiver never decrease, so copies
/// from one sender arrive in send order no matter what the jitter draws.
class Channel {
 public:
  explicit Channel(LinkModel model = {});

  /// Throws std::invalid_argument for a duplicate id.
  NodeHandle register_node(DroneId id);
  bool is_registered(DroneId id) const;

  /// Throws std::invalid_argument if the sender is unregistered or its
  /// stamp goes backwards.
  void broadcast(const Packet& packet);

  /// Advances the clock by dt and releases every copy due by the new clock.
  Delivery step(double dt);

  double now() const { return clock_; }
  const LinkModel& model() const { return model_; }

  LinkStats stats(DroneId sender, DroneId receiver) const;

  /// Optional line-delimited trace of send/drop/deliver events.
  void set_trace(std::ostream* trace) { trace_ = trace; }

 private:
  struct InFlight {
    double deliver_at = 0.0;
    std::uint64_t seq = 0;
    Packet packet;
  };

  void trace_event(std::string_view event, const Packet& p, DroneId receiver, double at);

  LinkModel model_;
  double clock_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::mt19937_64 rng_;
  std::vector<DroneId> nodes_;
  std::map<DroneId, std::vector<InFlight>> in_flight_;
  std::map<std::pair<DroneId, DroneId>, double> last_delivery_;
  std::map<DroneId, double> last_stamp_;
  std::map<std::pair<DroneId, DroneId>, LinkStats> stats_;
  std::ostream* trace_ = nullptr;
};

}  // namespace swarmloc
