#pragma once

// Microservice inference: service DAGs shared by several request flows,
// placement search, robust routing against adversarial request patterns, and
// drift-plus-penalty online migration.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgelam/netsim.hpp"

namespace edgelam::micro {

enum class ServiceKind {
  modality_encoder,
  input_projector,
  backbone,
  output_projector,
  modality_decoder,
};

std::string_view kind_name(ServiceKind kind);
// Throws invalid-parameter for an unknown name.
ServiceKind parse_kind(std::string_view name);

struct Microservice {
  std::string id;
  double flops = 1.0;   // per request
  double memory = 1.0;  // bytes
  ServiceKind kind = ServiceKind::backbone;
};

struct DagEdge {
  std::string src;
  std::string dst;
  double bytes = 0.0;  // payload per request
};

class ServiceDag {
 public:
  ServiceDag() = default;
  // Checks ids, positive costs and edge endpoints; cycles are reported by
  // validate_dag, not here.
  ServiceDag(std::vector<Microservice> services, std::vector<DagEdge> edges);

  const std::vector<Microservice>& services() const noexcept { return services_; }
  const std::vector<DagEdge>& edges() const noexcept { return edges_; }
  bool has(std::string_view id) const;
  const Microservice& service(std::string_view id) const;
  std::size_t index(std::string_view id) const;

 private:
  std::vector<Microservice> services_;
  std::vector<DagEdge> edges_;
};

// One cycle as a vertex list without the repeated closing vertex, rotated so
// the smallest id comes first. nullopt for an acyclic graph.
std::optional<std::vector<std::string>> find_cycle(const ServiceDag& dag);

// Topological order (Kahn, smallest ready id first). Throws cycle-detected
// with the offending cycle in the message.
std::vector<std::string> validate_dag(const ServiceDag& dag);

struct RequestFlow {
  std::string id;
  std::vector<std::string> services;  // the flow's sub-DAG
  std::string source;                 // user attachment node
  std::string modality;
  double input_bytes = 0.0;           // sent from the source to each entry service
  double arrival_rate = 1.0;          // mean requests per slot
};

// Poisson arrival times on [0, horizon).
std::vector<double> arrival_times(const RequestFlow& flow, double horizon, double slot_s,
                                  std::uint64_t seed);

struct DeploymentPlan {
  std::map<std::string, std::vector<std::string>> placement;  // service -> sorted node ids

  // Single-replica convenience.
  void place(const std::string& service, const std::string& node);
  std::size_t replicas(const std::string& service) const;
};

// Bytes charged per node; a service counts once per node however many flows
// share it.
std::map<std::string, double> node_memory(const DeploymentPlan& plan, const ServiceDag& dag);

// Throws unplaced-microservice or infeasible-memory.
void check_plan(const DeploymentPlan& plan, const ServiceDag& dag, const netsim::Topology& topology);

// Longest path through the flow's sub-DAG. Node cost is computation latency
// on the serving node, edge cost is route latency between serving nodes
// (0 when co-located). Each (service, replica) takes the upstream replica
// that minimizes its finish time, in topological order. Entry services
// receive `input_bytes` from the flow source.
double end_to_end_latency(const DeploymentPlan& plan, const ServiceDag& dag,
                          const netsim::Topology& topology, const RequestFlow& flow);

double mean_latency(const DeploymentPlan& plan, const ServiceDag& dag,
                    const netsim::Topology& topology, std::span<const RequestFlow> flows);

constexpr std::size_t kBruteForceMaxNodes = 8;
constexpr std::size_t kBruteForceMaxServices = 5;

// Exhaustive single-replica search minimizing mean flow latency; ties go to
// the lexicographically smallest placement vector (node indices in sorted id
// order, services in DAG order). Throws instance-too-large, infeasible-memory.
DeploymentPlan deploy_bruteforce(const ServiceDag& dag, const netsim::Topology& topology,
                                 std::span<const RequestFlow> flows);

// Topological order; each service goes to the feasible node with the smallest
// mean latency over the services placed so far. Throws infeasible-memory.
DeploymentPlan deploy_greedy(const ServiceDag& dag, const netsim::Topology& topology,
                             std::span<const RequestFlow> flows);

// Adversary: per-flow multipliers on the arrival rate.
struct RequestPattern {
  std::string name;
  std::vector<double> rate_scale;
};

// Routing policy: one serving replica per service.
struct RoutingPolicy {
  std::string name;
  std::map<std::string, std::string> route;
};

constexpr std::size_t kMaxStrategySpace = 64;

// Every replica combination of the plan, in lexicographic order. Throws
// invalid-parameter when there are more than kMaxStrategySpace.
std::vector<RoutingPolicy> enumerate_policies(const DeploymentPlan& plan, const ServiceDag& dag);

struct OrchestrationParams {
  std::size_t slots = 50;
  double slot_s = 1.0;
  double cost_weight = 0.1;  // per active node per slot
  std::uint64_t seed = 0;
};

struct OrchestrationResult {
  std::vector<std::vector<double>> payoff;  // [policy][strategy] mean utility
  std::vector<double> worst_case;
  std::size_t chosen = 0;
};

// Mean per-slot utility of one policy against one pattern. Arrivals are
// Poisson per slot from a stream that depends on (seed, pattern) only, so all
// policies face the same requests. Node compute latency is stretched by
// 1 / (1 - min(load, 0.99)); utility = -mean latency - cost_weight * active nodes.
double simulate_utility(const RoutingPolicy& policy, const RequestPattern& pattern,
                        std::size_t pattern_index, const ServiceDag& dag,
                        const netsim::Topology& topology, std::span<const RequestFlow> flows,
                        const OrchestrationParams& params);

// Exact maximin over pure strategies; ties go to the earliest policy. Throws
// insufficient-replication unless every service has >= 2 replicas.
OrchestrationResult robust_orchestrate(const DeploymentPlan& plan, const ServiceDag& dag,
                                       const netsim::Topology& topology,
                                       std::span<const RequestFlow> flows,
                                       std::span<const RequestPattern> strategies,
                                       std::span<const RoutingPolicy> policies,
                                       const OrchestrationParams& params);

struct VirtualQueue {
  double q = 0.0;
  double budget = 0.0;  // migration cost allowed per slot on average
  double v = 1.0;       // latency weight
};

struct MigrationAction {
  bool stay = true;
  std::string service;
  std::string from;
  std::string to;

  std::string describe() const;
};

struct MigrationParams {
  double handoff_cost = 0.0;  // fixed cost per moved service
};

struct StepOutcome {
  MigrationAction action;
  double latency = 0.0;  // mean flow latency after the action
  double cost = 0.0;
  double score = 0.0;
  VirtualQueue queue;    // after the update
};

// Migration cost of moving `service` between nodes: route latency of its
// memory image plus the handoff cost.
double migration_cost(const ServiceDag& dag, const netsim::Topology& topology,
                      const std::string& service, const std::string& from, const std::string& to,
                      const MigrationParams& params);

// Candidates are stay and every single-service move to a memory-feasible
// node. argmin of V * latency + Q * cost; ties prefer stay, then
// (service, node) order. Then Q <- max(Q + cost - budget, 0). `placement`
// must be single-replica and is updated in place. Throws no-feasible-action.
StepOutcome migrate_step(DeploymentPlan& placement, const VirtualQueue& queue,
                         const ServiceDag& dag, const netsim::Topology& topology,
                         std::span<const RequestFlow> flows, const MigrationParams& params);

struct SlotRecord {
  std::size_t slot = 0;
  std::string user_node;
  std::string action;
  double latency_s = 0.0;
  double cost = 0.0;
  double q_before = 0.0;
  double q = 0.0;
};

struct MobilityTrace {
  std::vector<SlotRecord> slots;
  double average_cost = 0.0;
  double average_latency = 0.0;
  double latency_variance = 0.0;
  double deadline_miss_fraction = 0.0;
  double max_slot_cost = 0.0;
  std::size_t migrations = 0;
  DeploymentPlan final_placement;
};

// Each slot re-attaches every flow's source to user_path[slot] and applies
// migrate_step.
MobilityTrace run_mobility_trace(const DeploymentPlan& initial, const ServiceDag& dag,
                                 const netsim::Topology& topology,
                                 std::vector<RequestFlow> flows,
                                 std::span<const std::string> user_path, VirtualQueue queue,
                                 const MigrationParams& params, double deadline_s);

nlohmann::json plan_json(const DeploymentPlan& plan);
// slot,user_node,action,latency_s,cost,Q
std::string migrate_csv(const MobilityTrace& trace);
nlohmann::json orchestrate_json(const OrchestrationResult& result,
                                std::span<const RoutingPolicy> policies,
                                std::span<const RequestPattern> strategies);

}  // namespace edgelam::micro
