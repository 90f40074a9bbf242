#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace edgelam::netsim {

constexpr double kDefaultRateStep = 0.01;
constexpr double kUnboundedHorizon = std::numeric_limits<double>::infinity();

enum class NodeRole { device, server };

std::string_view role_name(NodeRole role);

struct NodeSpec {
  std::string id;
  double compute_rate = 1.0;  // flop/s
  double storage = 1.0;       // bytes
  NodeRole role = NodeRole::device;
};

// Achievable rate (bit/s) as a right-continuous step function of time. The
// last segment extends to infinity.
class RateSchedule {
 public:
  struct Segment {
    double start;
    double rate;
  };

  static RateSchedule constant(double bps);
  // (start time, rate) pairs; the first start must be 0 and starts increase.
  static RateSchedule steps(std::vector<Segment> segments);
  // Shannon rate over i.i.d. Rayleigh block fading, one draw per `step_s`
  // up to `horizon_s`: rate = bandwidth * log2(1 + snr * g), g ~ Exp(1).
  static RateSchedule rayleigh(double bandwidth_hz, double mean_snr, double step_s,
                               double horizon_s, std::uint64_t seed);

  double rate_at(double t) const;
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  // Pointwise scaled copy; used by the monotonicity property tests.
  RateSchedule scaled(double factor) const;

 private:
  explicit RateSchedule(std::vector<Segment> segments);
  std::size_t segment_index(double t) const;

  std::vector<Segment> segments_;
};

struct LinkState {
  std::string src;
  std::string dst;
  RateSchedule rate = RateSchedule::constant(1.0);
  double prop_delay = 0.0;
};

class Topology {
 public:
  Topology() = default;
  Topology(std::vector<NodeSpec> nodes, std::vector<LinkState> links, std::uint64_t seed,
           double horizon = kUnboundedHorizon);

  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
  const std::vector<LinkState>& links() const noexcept { return links_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double horizon() const noexcept { return horizon_; }

  bool has_node(std::string_view id) const;
  // Throws invalid-parameter for an unknown id.
  const NodeSpec& node(std::string_view id) const;
  std::size_t node_index(std::string_view id) const;
  std::vector<std::string> node_ids(std::optional<NodeRole> role = std::nullopt) const;

  // Links are bidirectional; returns the first link joining a and b.
  const LinkState* link(std::string_view a, std::string_view b) const;

  // Fewest-hop path including both endpoints; neighbours are visited in id
  // order so the route is deterministic. nullopt when disconnected.
  std::optional<std::vector<std::string>> route(std::string_view src,
                                                std::string_view dst) const;

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<LinkState> links_;
  std::uint64_t seed_ = 0;
  double horizon_ = kUnboundedHorizon;
};

// Smallest d with integral of rate over [t0, t0 + d] >= 8 * bytes, plus the
// propagation delay. Throws horizon-exceeded when the payload cannot finish
// by `horizon`.
double transmission_latency(double bytes, const LinkState& link, double t0,
                            double horizon = kUnboundedHorizon);

// Store-and-forward latency along topology.route(src, dst); 0 when co-located.
// Throws unreachable-device when no path exists.
double route_latency(const Topology& topology, std::string_view src, std::string_view dst,
                     double bytes, double t0);

double computation_latency(double flops, const NodeSpec& node);

class EventClock;

struct Event {
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();
  std::function<void(EventClock&)> action;
};

struct FiredEvent {
  double time;
  std::string kind;
  nlohmann::json payload;
};

// Discrete-event queue: nondecreasing time, FIFO among equal times.
class EventClock {
 public:
  explicit EventClock(double start = 0.0) : now_(start) {}

  double now() const noexcept { return now_; }
  std::size_t pending() const noexcept { return queue_.size(); }

  void schedule(double time, Event event);
  void schedule_after(double delay, Event event) { schedule(now_ + delay, std::move(event)); }

  // Fires every event with time <= t_end; actions may schedule further events.
  std::vector<FiredEvent> run_until(double t_end);

 private:
  struct Entry {
    double time;
    std::uint64_t seq;
    Event event;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  double now_;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
};

// Columns: time_s,event_kind,payload_json
void write_trace_csv(std::ostream& out, std::span<const FiredEvent> trace);

// Builds a topology from the `topology` config table. `seed` drives any
// stochastic link schedule.
Topology topology_from_json(const nlohmann::json& table, std::uint64_t seed);

}  // namespace edgelam::netsim
