#include "edgelam/micro.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "edgelam/error.hpp"
#include "edgelam/io.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::micro {
namespace {

constexpr std::uint64_t kTagArrivals = 0x61727276;
constexpr std::uint64_t kTagOrchestrate = 0x6f726368;
constexpr double kInf = std::numeric_limits<double>::infinity();

using ReplicaFn = std::function<const std::vector<std::string>*(const std::string&)>;
using ScaleFn = std::function<double(const std::string&)>;

std::vector<std::string> sorted_nodes(const netsim::Topology& topology) {
  auto ids = topology.node_ids();
  std::sort(ids.begin(), ids.end());
  return ids;
}

double safe_route(const netsim::Topology& topology, const std::string& a, const std::string& b,
                  double bytes, double t0) {
  if (a == b) return 0.0;
  if (!topology.route(a, b)) return kInf;
  return netsim::route_latency(topology, a, b, bytes, t0);
}

// Earliest finish per (service, replica) over the flow's sub-DAG.
double flow_latency(const ServiceDag& dag, const std::vector<std::string>& order,
                    const netsim::Topology& topology, const RequestFlow& flow,
                    const ReplicaFn& replicas_of, const ScaleFn& scale, bool skip_unplaced) {
  std::set<std::string> members;
  for (const auto& s : flow.services) {
    if (!dag.has(s)) fail(Errc::invalid_parameter, "flow " + flow.id + " names unknown service " + s);
    const auto* reps = replicas_of(s);
    if (reps == nullptr || reps->empty()) {
      if (skip_unplaced) continue;
      fail(Errc::unplaced_microservice, "service " + s + " has no replica");
    }
    members.insert(s);
  }
  if (members.empty()) return 0.0;

  std::map<std::string, std::vector<double>> finish;
  std::set<std::string> has_successor;
  for (const auto& e : dag.edges()) {
    if (members.count(e.src) && members.count(e.dst)) has_successor.insert(e.src);
  }
  double latency = 0.0;
  for (const auto& s : order) {
    if (!members.count(s)) continue;
    const auto& reps = *replicas_of(s);
    const auto& svc = dag.service(s);
    auto& fin = finish[s];
    fin.assign(reps.size(), kInf);
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const std::string& node = reps[r];
      double ready = 0.0;
      bool has_pred = false;
      for (const auto& e : dag.edges()) {
        if (e.dst != s || !members.count(e.src)) continue;
        has_pred = true;
        const auto& pred_reps = *replicas_of(e.src);
        const auto& pred_fin = finish[e.src];
        double best = kInf;
        for (std::size_t m = 0; m < pred_reps.size(); ++m) {
          if (std::isinf(pred_fin[m])) continue;
          best = std::min(best, pred_fin[m] + safe_route(topology, pred_reps[m], node, e.bytes, pred_fin[m]));
        }
        ready = std::max(ready, best);
      }
      if (!has_pred) ready = safe_route(topology, flow.source, node, flow.input_bytes, 0.0);
      if (std::isinf(ready)) continue;
      const auto& spec = topology.node(node);
      fin[r] = ready + netsim::computation_latency(svc.flops, spec) * scale(node);
    }
    if (!has_successor.count(s)) {
      const double best = *std::min_element(fin.begin(), fin.end());
      if (std::isinf(best)) {
        fail(Errc::unreachable_device, "flow " + flow.id + " cannot reach any replica of " + s);
      }
      latency = std::max(latency, best);
    }
  }
  return latency;
}

ReplicaFn plan_replicas(const DeploymentPlan& plan) {
  return [&plan](const std::string& s) -> const std::vector<std::string>* {
    auto it = plan.placement.find(s);
    return it == plan.placement.end() ? nullptr : &it->second;
  };
}

double unit_scale(const std::string&) { return 1.0; }

bool memory_feasible(const DeploymentPlan& plan, const ServiceDag& dag,
                     const netsim::Topology& topology) {
  for (const auto& [node, bytes] : node_memory(plan, dag)) {
    if (bytes > topology.node(node).storage) return false;
  }
  return true;
}

}  // namespace

std::string_view kind_name(ServiceKind kind) {
  switch (kind) {
    case ServiceKind::modality_encoder: return "modality_encoder";
    case ServiceKind::input_projector: return "input_projector";
    case ServiceKind::backbone: return "backbone";
    case ServiceKind::output_projector: return "output_projector";
    case ServiceKind::modality_decoder: return "modality_decoder";
  }
  return "unknown";
}

ServiceKind parse_kind(std::string_view name) {
  for (auto k : {ServiceKind::modality_encoder, ServiceKind::input_projector, ServiceKind::backbone,
                 ServiceKind::output_projector, ServiceKind::modality_decoder}) {
    if (kind_name(k) == name) return k;
  }
  fail(Errc::invalid_parameter, "unknown microservice kind " + std::string(name));
}

ServiceDag::ServiceDag(std::vector<Microservice> services, std::vector<DagEdge> edges)
    : services_(std::move(services)), edges_(std::move(edges)) {
  std::set<std::string> seen;
  for (const auto& s : services_) {
    if (s.id.empty()) fail(Errc::invalid_parameter, "microservice id must be nonempty");
    if (!seen.insert(s.id).second) fail(Errc::invalid_parameter, "duplicate microservice " + s.id);
    if (!(s.flops > 0.0) || !(s.memory > 0.0)) {
      fail(Errc::invalid_parameter, "microservice " + s.id + " needs positive flops and memory");
    }
  }
  for (const auto& e : edges_) {
    if (!seen.count(e.src) || !seen.count(e.dst)) {
      fail(Errc::invalid_parameter, "edge " + e.src + " -> " + e.dst + " has an unknown endpoint");
    }
    if (!(e.bytes >= 0.0)) fail(Errc::invalid_parameter, "edge payload must be >= 0");
  }
}

bool ServiceDag::has(std::string_view id) const {
  return std::any_of(services_.begin(), services_.end(), [&](const auto& s) { return s.id == id; });
}

std::size_t ServiceDag::index(std::string_view id) const {
  for (std::size_t i = 0; i < services_.size(); ++i)
    if (services_[i].id == id) return i;
  fail(Errc::invalid_parameter, "unknown microservice " + std::string(id));
}

const Microservice& ServiceDag::service(std::string_view id) const { return services_[index(id)]; }

std::optional<std::vector<std::string>> find_cycle(const ServiceDag& dag) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& s : dag.services()) adj[s.id];
  for (const auto& e : dag.edges()) adj[e.src].push_back(e.dst);
  for (auto& [id, out] : adj) std::sort(out.begin(), out.end());

  std::map<std::string, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<std::string> stack;
  std::optional<std::vector<std::string>> found;
  std::function<void(const std::string&)> dfs = [&](const std::string& u) {
    color[u] = 1;
    stack.push_back(u);
    for (const auto& v : adj[u]) {
      if (found) return;
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        std::vector<std::string> cycle(it, stack.end());
        std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
        found = cycle;
        return;
      }
      if (color[v] == 0) dfs(v);
    }
    stack.pop_back();
    color[u] = 2;
  };
  for (const auto& [id, out] : adj) {
    if (found) break;
    if (color[id] == 0) dfs(id);
  }
  return found;
}

std::vector<std::string> validate_dag(const ServiceDag& dag) {
  if (auto cycle = find_cycle(dag)) {
    std::string msg = "cycle:";
    for (const auto& v : *cycle) msg += " " + v + " ->";
    msg += " " + cycle->front();
    fail(Errc::cycle_detected, msg);
  }
  std::map<std::string, std::size_t> indeg;
  for (const auto& s : dag.services()) indeg[s.id] = 0;
  for (const auto& e : dag.edges()) ++indeg[e.dst];
  std::set<std::string> ready;
  for (const auto& [id, d] : indeg)
    if (d == 0) ready.insert(id);
  std::vector<std::string> order;
  while (!ready.empty()) {
    const std::string u = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(u);
    for (const auto& e : dag.edges()) {
      if (e.src == u && --indeg[e.dst] == 0) ready.insert(e.dst);
    }
  }
  return order;
}

std::vector<double> arrival_times(const RequestFlow& flow, double horizon, double slot_s,
                                  std::uint64_t seed) {
  std::vector<double> out;
  if (!(flow.arrival_rate > 0.0) || !(slot_s > 0.0)) return out;
  Rng rng = make_rng(seed, kTagArrivals, 0);
  std::exponential_distribution<double> gap(flow.arrival_rate / slot_s);
  for (double t = gap(rng); t < horizon; t += gap(rng)) out.push_back(t);
  return out;
}

void DeploymentPlan::place(const std::string& service, const std::string& node) {
  placement[service] = {node};
}

std::size_t DeploymentPlan::replicas(const std::string& service) const {
  auto it = placement.find(service);
  return it == placement.end() ? 0 : it->second.size();
}

std::map<std::string, double> node_memory(const DeploymentPlan& plan, const ServiceDag& dag) {
  std::map<std::string, double> used;
  for (const auto& [service, nodes] : plan.placement) {
    const std::set<std::string> distinct(nodes.begin(), nodes.end());
    for (const auto& n : distinct) used[n] += dag.service(service).memory;
  }
  return used;
}

void check_plan(const DeploymentPlan& plan, const ServiceDag& dag, const netsim::Topology& topology) {
  for (const auto& s : dag.services()) {
    if (plan.replicas(s.id) == 0) fail(Errc::unplaced_microservice, "service " + s.id + " is not placed");
  }
  for (const auto& [service, nodes] : plan.placement) {
    for (const auto& n : nodes) {
      if (!topology.has_node(n)) fail(Errc::invalid_parameter, "service " + service + " placed on unknown node " + n);
    }
  }
  for (const auto& [node, bytes] : node_memory(plan, dag)) {
    if (bytes > topology.node(node).storage) {
      fail(Errc::infeasible_memory, "node " + node + " needs " + io::format_double(bytes) +
                                        " bytes but has " + io::format_double(topology.node(node).storage));
    }
  }
}

double end_to_end_latency(const DeploymentPlan& plan, const ServiceDag& dag,
                          const netsim::Topology& topology, const RequestFlow& flow) {
  return flow_latency(dag, validate_dag(dag), topology, flow, plan_replicas(plan), unit_scale, false);
}

double mean_latency(const DeploymentPlan& plan, const ServiceDag& dag,
                    const netsim::Topology& topology, std::span<const RequestFlow> flows) {
  if (flows.empty()) return 0.0;
  const auto order = validate_dag(dag);
  double total = 0.0;
  for (const auto& f : flows) total += flow_latency(dag, order, topology, f, plan_replicas(plan), unit_scale, false);
  return total / static_cast<double>(flows.size());
}

DeploymentPlan deploy_bruteforce(const ServiceDag& dag, const netsim::Topology& topology,
                                 std::span<const RequestFlow> flows) {
  const auto nodes = sorted_nodes(topology);
  const auto& services = dag.services();
  if (nodes.size() > kBruteForceMaxNodes || services.size() > kBruteForceMaxServices) {
    fail(Errc::instance_too_large, std::to_string(nodes.size()) + " nodes x " +
                                       std::to_string(services.size()) +
                                       " services exceeds the exhaustive search guard");
  }
  const auto order = validate_dag(dag);
  std::vector<std::size_t> idx(services.size(), 0);
  DeploymentPlan best;
  double best_val = kInf;
  bool any_feasible = false;
  while (true) {
    DeploymentPlan plan;
    for (std::size_t i = 0; i < services.size(); ++i) plan.place(services[i].id, nodes[idx[i]]);
    if (memory_feasible(plan, dag, topology)) {
      double total = 0.0;
      for (const auto& f : flows) {
        total += flow_latency(dag, order, topology, f, plan_replicas(plan), unit_scale, false);
      }
      const double val = flows.empty() ? 0.0 : total / static_cast<double>(flows.size());
      if (!any_feasible || val < best_val) {
        best_val = val;
        best = plan;
        any_feasible = true;
      }
    }
    std::size_t pos = services.size();
    while (pos > 0 && ++idx[pos - 1] == nodes.size()) idx[--pos] = 0;
    if (pos == 0) break;
  }
  if (!any_feasible) fail(Errc::infeasible_memory, "no single-replica placement fits node memory");
  return best;
}

DeploymentPlan deploy_greedy(const ServiceDag& dag, const netsim::Topology& topology,
                             std::span<const RequestFlow> flows) {
  const auto nodes = sorted_nodes(topology);
  const auto order = validate_dag(dag);
  DeploymentPlan plan;
  std::map<std::string, double> used;
  for (const auto& s : order) {
    const double mem = dag.service(s).memory;
    std::string chosen;
    double best = kInf;
    for (const auto& n : nodes) {
      if (used[n] + mem > topology.node(n).storage) continue;
      plan.place(s, n);
      double total = 0.0;
      for (const auto& f : flows) {
        total += flow_latency(dag, order, topology, f, plan_replicas(plan), unit_scale, true);
      }
      const double val = flows.empty() ? 0.0 : total / static_cast<double>(flows.size());
      if (chosen.empty() || val < best) {
        best = val;
        chosen = n;
      }
    }
    if (chosen.empty()) fail(Errc::infeasible_memory, "no node has memory left for " + s);
    plan.place(s, chosen);
    used[chosen] += mem;
  }
  return plan;
}

std::vector<RoutingPolicy> enumerate_policies(const DeploymentPlan& plan, const ServiceDag& dag) {
  std::vector<std::string> ids;
  double count = 1.0;
  for (const auto& s : dag.services()) {
    if (plan.replicas(s.id) == 0) fail(Errc::unplaced_microservice, "service " + s.id + " is not placed");
    ids.push_back(s.id);
    count *= static_cast<double>(plan.replicas(s.id));
  }
  std::sort(ids.begin(), ids.end());
  if (count > static_cast<double>(kMaxStrategySpace)) {
    fail(Errc::invalid_parameter, "policy space of " + io::format_double(count) + " exceeds " +
                                      std::to_string(kMaxStrategySpace));
  }
  std::vector<RoutingPolicy> out;
  std::vector<std::size_t> idx(ids.size(), 0);
  while (true) {
    RoutingPolicy p;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& node = plan.placement.at(ids[i])[idx[i]];
      p.route[ids[i]] = node;
      p.name += (i ? "," : "") + ids[i] + "@" + node;
    }
    out.push_back(std::move(p));
    std::size_t pos = ids.size();
    while (pos > 0 && ++idx[pos - 1] == plan.replicas(ids[pos - 1])) idx[--pos] = 0;
    if (pos == 0) break;
  }
  return out;
}

double simulate_utility(const RoutingPolicy& policy, const RequestPattern& pattern,
                        std::size_t pattern_index, const ServiceDag& dag,
                        const netsim::Topology& topology, std::span<const RequestFlow> flows,
                        const OrchestrationParams& params) {
  if (pattern.rate_scale.size() != flows.size()) {
    fail(Errc::dimension_mismatch, "pattern " + pattern.name + " has " +
                                       std::to_string(pattern.rate_scale.size()) + " rates for " +
                                       std::to_string(flows.size()) + " flows");
  }
  if (params.slots == 0) fail(Errc::invalid_parameter, "orchestration needs at least one slot");
  const auto order = validate_dag(dag);
  std::map<std::string, std::vector<std::string>> single;
  for (const auto& [s, n] : policy.route) single[s] = {n};
  const ReplicaFn replicas = [&](const std::string& s) -> const std::vector<std::string>* {
    auto it = single.find(s);
    return it == single.end() ? nullptr : &it->second;
  };

  Rng rng = make_rng(params.seed, kTagOrchestrate, pattern_index);
  double total = 0.0;
  for (std::size_t slot = 0; slot < params.slots; ++slot) {
    std::vector<int> counts(flows.size());
    for (std::size_t f = 0; f < flows.size(); ++f) {
      std::poisson_distribution<int> arrivals(flows[f].arrival_rate * pattern.rate_scale[f]);
      counts[f] = arrivals(rng);
    }
    std::map<std::string, double> demand;
    for (std::size_t f = 0; f < flows.size(); ++f) {
      for (const auto& s : flows[f].services) {
        demand[policy.route.at(s)] += counts[f] * dag.service(s).flops;
      }
    }
    const ScaleFn stretch = [&](const std::string& node) {
      auto it = demand.find(node);
      const double load = it == demand.end() ? 0.0 : it->second / (topology.node(node).compute_rate * params.slot_s);
      return 1.0 / (1.0 - std::min(load, 0.99));
    };
    double lat = 0.0;
    int requests = 0;
    for (std::size_t f = 0; f < flows.size(); ++f) {
      if (counts[f] == 0) continue;
      lat += counts[f] * flow_latency(dag, order, topology, flows[f], replicas, stretch, false);
      requests += counts[f];
    }
    std::size_t active = 0;
    for (const auto& [node, d] : demand)
      if (d > 0.0) ++active;
    const double mean = requests > 0 ? lat / requests : 0.0;
    total += -mean - params.cost_weight * static_cast<double>(active);
  }
  return total / static_cast<double>(params.slots);
}

OrchestrationResult robust_orchestrate(const DeploymentPlan& plan, const ServiceDag& dag,
                                       const netsim::Topology& topology,
                                       std::span<const RequestFlow> flows,
                                       std::span<const RequestPattern> strategies,
                                       std::span<const RoutingPolicy> policies,
                                       const OrchestrationParams& params) {
  for (const auto& s : dag.services()) {
    if (plan.replicas(s.id) < 2) {
      fail(Errc::insufficient_replication, "service " + s.id + " has " +
                                               std::to_string(plan.replicas(s.id)) + " replica(s)");
    }
  }
  if (strategies.empty() || policies.empty()) {
    fail(Errc::invalid_parameter, "strategy and policy spaces must be nonempty");
  }
  if (strategies.size() > kMaxStrategySpace || policies.size() > kMaxStrategySpace) {
    fail(Errc::invalid_parameter, "strategy spaces are limited to " + std::to_string(kMaxStrategySpace));
  }
  for (const auto& p : policies) {
    for (const auto& s : dag.services()) {
      auto it = p.route.find(s.id);
      const auto& reps = plan.placement.at(s.id);
      if (it == p.route.end() || std::find(reps.begin(), reps.end(), it->second) == reps.end()) {
        fail(Errc::invalid_parameter, "policy " + p.name + " does not route " + s.id + " to a replica");
      }
    }
  }
  OrchestrationResult out;
  for (const auto& p : policies) {
    std::vector<double> row;
    for (std::size_t j = 0; j < strategies.size(); ++j) {
      row.push_back(simulate_utility(p, strategies[j], j, dag, topology, flows, params));
    }
    out.worst_case.push_back(*std::min_element(row.begin(), row.end()));
    out.payoff.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < policies.size(); ++i) {
    if (out.worst_case[i] > out.worst_case[out.chosen]) out.chosen = i;
  }
  return out;
}

std::string MigrationAction::describe() const {
  return stay ? std::string("stay") : "move:" + service + ":" + from + "->" + to;
}

double migration_cost(const ServiceDag& dag, const netsim::Topology& topology,
                      const std::string& service, const std::string& from, const std::string& to,
                      const MigrationParams& params) {
  return safe_route(topology, from, to, dag.service(service).memory, 0.0) + params.handoff_cost;
}

StepOutcome migrate_step(DeploymentPlan& placement, const VirtualQueue& queue,
                         const ServiceDag& dag, const netsim::Topology& topology,
                         std::span<const RequestFlow> flows, const MigrationParams& params) {
  if (!(queue.v > 0.0)) fail(Errc::invalid_parameter, "V must be > 0");
  if (!(queue.q >= 0.0)) fail(Errc::invalid_parameter, "queue backlog must be >= 0");
  for (const auto& s : dag.services()) {
    if (placement.replicas(s.id) != 1) {
      fail(Errc::invalid_parameter, "migration needs exactly one replica of " + s.id);
    }
  }
  const auto order = validate_dag(dag);
  const auto nodes = sorted_nodes(topology);
  auto latency_of = [&](const DeploymentPlan& p) {
    if (flows.empty()) return 0.0;
    double total = 0.0;
    for (const auto& f : flows) total += flow_latency(dag, order, topology, f, plan_replicas(p), unit_scale, false);
    return total / static_cast<double>(flows.size());
  };

  StepOutcome best;
  bool found = false;
  if (memory_feasible(placement, dag, topology)) {
    best.latency = latency_of(placement);
    best.cost = 0.0;
    best.score = queue.v * best.latency;
    found = true;
  }
  for (const auto& [service, where] : placement.placement) {
    const std::string from = where.front();
    for (const auto& to : nodes) {
      if (to == from || !topology.route(from, to)) continue;
      DeploymentPlan moved = placement;
      moved.place(service, to);
      if (!memory_feasible(moved, dag, topology)) continue;
      const double lat = latency_of(moved);
      const double cost = migration_cost(dag, topology, service, from, to, params);
      const double score = queue.v * lat + queue.q * cost;
      if (!found || score < best.score) {
        best.action = {false, service, from, to};
        best.latency = lat;
        best.cost = cost;
        best.score = score;
        found = true;
      }
    }
  }
  if (!found) fail(Errc::no_feasible_action, "current placement is infeasible and no move repairs it");
  if (!best.action.stay) placement.place(best.action.service, best.action.to);
  best.queue = queue;
  best.queue.q = std::max(queue.q + best.cost - queue.budget, 0.0);
  return best;
}

MobilityTrace run_mobility_trace(const DeploymentPlan& initial, const ServiceDag& dag,
                                 const netsim::Topology& topology,
                                 std::vector<RequestFlow> flows,
                                 std::span<const std::string> user_path, VirtualQueue queue,
                                 const MigrationParams& params, double deadline_s) {
  MobilityTrace trace;
  DeploymentPlan placement = initial;
  double sum_lat = 0.0, sum_sq = 0.0, sum_cost = 0.0;
  std::size_t misses = 0;
  for (std::size_t t = 0; t < user_path.size(); ++t) {
    for (auto& f : flows) f.source = user_path[t];
    const double q_before = queue.q;
    const auto step = migrate_step(placement, queue, dag, topology, flows, params);
    queue = step.queue;
    trace.slots.push_back({t, user_path[t], step.action.describe(), step.latency, step.cost, q_before, queue.q});
    if (!step.action.stay) ++trace.migrations;
    sum_lat += step.latency;
    sum_sq += step.latency * step.latency;
    sum_cost += step.cost;
    trace.max_slot_cost = std::max(trace.max_slot_cost, step.cost);
    if (step.latency > deadline_s) ++misses;
  }
  const double n = static_cast<double>(user_path.size());
  if (n > 0) {
    trace.average_cost = sum_cost / n;
    trace.average_latency = sum_lat / n;
    trace.latency_variance = std::max(sum_sq / n - trace.average_latency * trace.average_latency, 0.0);
    trace.deadline_miss_fraction = static_cast<double>(misses) / n;
  }
  trace.final_placement = placement;
  return trace;
}

nlohmann::json plan_json(const DeploymentPlan& plan) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [service, nodes] : plan.placement) j[service] = nodes;
  return j;
}

std::string migrate_csv(const MobilityTrace& trace) {
  std::ostringstream out;
  out << "slot,user_node,action,latency_s,cost,Q\n";
  for (const auto& r : trace.slots) {
    out << r.slot << ',' << io::csv_field(r.user_node) << ',' << io::csv_field(r.action) << ','
        << io::format_double(r.latency_s) << ',' << io::format_double(r.cost) << ','
        << io::format_double(r.q) << '\n';
  }
  return out.str();
}

nlohmann::json orchestrate_json(const OrchestrationResult& result,
                                std::span<const RoutingPolicy> policies,
                                std::span<const RequestPattern> strategies) {
  nlohmann::json j;
  j["policies"] = nlohmann::json::array();
  for (const auto& p : policies) j["policies"].push_back({{"name", p.name}, {"route", p.route}});
  j["strategies"] = nlohmann::json::array();
  for (const auto& s : strategies) j["strategies"].push_back({{"name", s.name}, {"rate_scale", s.rate_scale}});
  j["payoff"] = result.payoff;
  j["worst_case"] = result.worst_case;
  j["chosen"] = result.chosen;
  j["chosen_policy"] = policies.empty() ? nlohmann::json() : nlohmann::json(policies[result.chosen].name);
  return j;
}

}  // namespace edgelam::micro
