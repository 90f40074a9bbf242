#include "edgelam/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <set>

#include "edgelam/error.hpp"
#include "edgelam/io.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::netsim {

std::string_view role_name(NodeRole role) {
  return role == NodeRole::server ? "server" : "device";
}

// ---------------------------------------------------------------------------
// RateSchedule

RateSchedule::RateSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty() || segments_.front().start != 0.0) {
    fail(Errc::invalid_parameter, "rate schedule must start at t=0");
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!(segments_[i].rate > 0.0) || !std::isfinite(segments_[i].rate)) {
      fail(Errc::invalid_parameter, "rate schedule rates must be finite and > 0");
    }
    if (i > 0 && !(segments_[i].start > segments_[i - 1].start)) {
      fail(Errc::invalid_parameter, "rate schedule breakpoints must increase");
    }
  }
}

RateSchedule RateSchedule::constant(double bps) { return RateSchedule({{0.0, bps}}); }

RateSchedule RateSchedule::steps(std::vector<Segment> segments) {
  return RateSchedule(std::move(segments));
}

RateSchedule RateSchedule::rayleigh(double bandwidth_hz, double mean_snr, double step_s,
                                    double horizon_s, std::uint64_t seed) {
  if (!(bandwidth_hz > 0.0) || !(mean_snr > 0.0) || !(step_s > 0.0) ||
      !(horizon_s > 0.0) || !std::isfinite(horizon_s)) {
    fail(Errc::invalid_parameter, "rayleigh schedule needs positive finite parameters");
  }
  Rng rng(seed);
  std::exponential_distribution<double> gain(1.0);
  const auto n = static_cast<std::size_t>(std::ceil(horizon_s / step_s));
  std::vector<Segment> segs;
  segs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = std::clamp(gain(rng), 1e-6, 50.0);
    segs.push_back({static_cast<double>(i) * step_s, bandwidth_hz * std::log2(1.0 + mean_snr * g)});
  }
  return RateSchedule(std::move(segs));
}

std::size_t RateSchedule::segment_index(double t) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double v, const Segment& s) { return v < s.start; });
  return it == segments_.begin() ? 0 : static_cast<std::size_t>(it - segments_.begin() - 1);
}

double RateSchedule::rate_at(double t) const { return segments_[segment_index(t)].rate; }

RateSchedule RateSchedule::scaled(double factor) const {
  auto segs = segments_;
  for (auto& s : segs) s.rate *= factor;
  return RateSchedule(std::move(segs));
}

// ---------------------------------------------------------------------------
// Topology

Topology::Topology(std::vector<NodeSpec> nodes, std::vector<LinkState> links,
                   std::uint64_t seed, double horizon)
    : nodes_(std::move(nodes)), links_(std::move(links)), seed_(seed), horizon_(horizon) {
  std::set<std::string> ids;
  for (const auto& n : nodes_) {
    if (!ids.insert(n.id).second) fail(Errc::invalid_parameter, "duplicate node id " + n.id);
    if (!(n.compute_rate > 0.0)) fail(Errc::invalid_parameter, "node " + n.id + ": compute_rate must be > 0");
    if (!(n.storage > 0.0)) fail(Errc::invalid_parameter, "node " + n.id + ": storage must be > 0");
  }
  for (const auto& l : links_) {
    if (!ids.count(l.src) || !ids.count(l.dst)) {
      fail(Errc::invalid_parameter, "link " + l.src + "-" + l.dst + " references unknown node");
    }
    if (!(l.prop_delay >= 0.0)) fail(Errc::invalid_parameter, "link prop_delay must be >= 0");
  }
  if (!(horizon_ > 0.0)) fail(Errc::invalid_parameter, "horizon must be > 0");
}

bool Topology::has_node(std::string_view id) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const NodeSpec& n) { return n.id == id; });
}

std::size_t Topology::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  fail(Errc::invalid_parameter, "unknown node " + std::string(id));
}

const NodeSpec& Topology::node(std::string_view id) const { return nodes_[node_index(id)]; }

std::vector<std::string> Topology::node_ids(std::optional<NodeRole> role) const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (!role || n.role == *role) out.push_back(n.id);
  return out;
}

const LinkState* Topology::link(std::string_view a, std::string_view b) const {
  for (const auto& l : links_) {
    if ((l.src == a && l.dst == b) || (l.src == b && l.dst == a)) return &l;
  }
  return nullptr;
}

std::optional<std::vector<std::string>> Topology::route(std::string_view src,
                                                        std::string_view dst) const {
  if (!has_node(src) || !has_node(dst)) return std::nullopt;
  if (src == dst) return std::vector<std::string>{std::string(src)};
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& l : links_) {
    adj[l.src].insert(l.dst);
    adj[l.dst].insert(l.src);
  }
  std::map<std::string, std::string> parent;
  std::deque<std::string> frontier{std::string(src)};
  parent[std::string(src)] = std::string(src);
  while (!frontier.empty()) {
    const std::string cur = frontier.front();
    frontier.pop_front();
    if (cur == dst) break;
    for (const auto& next : adj[cur]) {
      if (parent.count(next)) continue;
      parent[next] = cur;
      frontier.push_back(next);
    }
  }
  if (!parent.count(std::string(dst))) return std::nullopt;
  std::vector<std::string> path{std::string(dst)};
  while (path.back() != src) path.push_back(parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

// ---------------------------------------------------------------------------
// Cost models

double transmission_latency(double bytes, const LinkState& link, double t0, double horizon) {
  if (!(bytes >= 0.0)) fail(Errc::invalid_parameter, "payload bytes must be >= 0");
  if (t0 > horizon) fail(Errc::horizon_exceeded, "transfer starts after the horizon");
  if (bytes == 0.0) return link.prop_delay;

  const auto& segs = link.rate.segments();
  double remaining = bytes * 8.0;
  double t = t0;
  auto idx = static_cast<std::size_t>(
      std::upper_bound(segs.begin(), segs.end(), t0,
                       [](double v, const RateSchedule::Segment& s) { return v < s.start; }) -
      segs.begin() - 1);
  while (true) {
    const double seg_end = idx + 1 < segs.size() ? segs[idx + 1].start : kUnboundedHorizon;
    const double end = std::min(seg_end, horizon);
    const double rate = segs[idx].rate;
    const double capacity = rate * (end - t);
    if (capacity >= remaining) {
      return (t + remaining / rate - t0) + link.prop_delay;
    }
    remaining -= capacity;
    t = end;
    if (t >= horizon) {
      fail(Errc::horizon_exceeded, "payload of " + io::format_double(bytes) +
                                       " bytes does not complete before the horizon");
    }
    ++idx;
  }
}

double route_latency(const Topology& topology, std::string_view src, std::string_view dst,
                     double bytes, double t0) {
  if (src == dst) return 0.0;
  auto path = topology.route(src, dst);
  if (!path) {
    fail(Errc::unreachable_device,
         "no link path from " + std::string(src) + " to " + std::string(dst));
  }
  double t = t0;
  for (std::size_t i = 0; i + 1 < path->size(); ++i) {
    const LinkState* l = topology.link((*path)[i], (*path)[i + 1]);
    t += transmission_latency(bytes, *l, t, topology.horizon());
  }
  return t - t0;
}

double computation_latency(double flops, const NodeSpec& node) {
  if (!(flops >= 0.0)) fail(Errc::invalid_parameter, "flops must be >= 0");
  return flops / node.compute_rate;
}

// ---------------------------------------------------------------------------
// EventClock

void EventClock::schedule(double time, Event event) {
  if (time < now_) fail(Errc::invalid_parameter, "cannot schedule an event in the past");
  queue_.push(Entry{time, next_seq_++, std::move(event)});
}

std::vector<FiredEvent> EventClock::run_until(double t_end) {
  if (t_end < now_) fail(Errc::invalid_parameter, "run_until: t_end precedes now");
  std::vector<FiredEvent> trace;
  while (!queue_.empty() && queue_.top().time <= t_end) {
    // priority_queue::top is const; the entry is discarded right after.
    Entry entry = std::move(const_cast<Entry&>(queue_.top()));
    queue_.pop();
    now_ = entry.time;
    trace.push_back({entry.time, entry.event.kind, entry.event.payload});
    if (entry.event.action) entry.event.action(*this);
  }
  now_ = std::max(now_, t_end);
  return trace;
}

void write_trace_csv(std::ostream& out, std::span<const FiredEvent> trace) {
  out << "time_s,event_kind,payload_json\n";
  for (const auto& e : trace) {
    out << io::format_double(e.time) << ',' << io::csv_field(e.kind) << ','
        << io::csv_field(e.payload.dump()) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config

namespace {

NodeRole parse_role(const std::string& s) {
  if (s == "device") return NodeRole::device;
  if (s == "server") return NodeRole::server;
  fail(Errc::config_parse, "topology.nodes.role must be \"device\" or \"server\", got \"" + s + "\"");
}

}  // namespace

Topology topology_from_json(const nlohmann::json& table, std::uint64_t seed) {
  const double horizon = table.value("horizon_s", kUnboundedHorizon);
  const double step = table.value("step_s", kDefaultRateStep);
  std::vector<NodeSpec> nodes;
  for (const auto& n : table.at("nodes")) {
    nodes.push_back({n.at("id").get<std::string>(), n.at("compute_rate").get<double>(),
                     n.at("storage").get<double>(), parse_role(n.value("role", "device"))});
  }
  std::vector<LinkState> links;
  std::uint64_t link_index = 0;
  for (const auto& l : table.value("links", nlohmann::json::array())) {
    LinkState link;
    link.src = l.at("src").get<std::string>();
    link.dst = l.at("dst").get<std::string>();
    link.prop_delay = l.value("prop_delay_s", 0.0);
    const auto& sched = l.value("schedule", nlohmann::json::array());
    const auto& fading = l.value("fading", nlohmann::json::object());
    if (!sched.empty()) {
      std::vector<RateSchedule::Segment> segs;
      for (const auto& p : sched) segs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      link.rate = RateSchedule::steps(std::move(segs));
    } else if (!fading.empty()) {
      if (!std::isfinite(horizon)) {
        fail(Errc::config_parse, "topology.horizon_s must be finite for fading links");
      }
      const double snr_db = fading.value("mean_snr_db", 10.0);
      link.rate = RateSchedule::rayleigh(fading.value("bandwidth_hz", 1e6),
                                         std::pow(10.0, snr_db / 10.0), step, horizon,
                                         derive_seed(seed, 0x6c696e6bULL, link_index));
    } else {
      link.rate = RateSchedule::constant(l.at("rate_bps").get<double>());
    }
    links.push_back(std::move(link));
    ++link_index;
  }
  return Topology(std::move(nodes), std::move(links), seed, horizon);
}

}  // namespace edgelam::netsim
