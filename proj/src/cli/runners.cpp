#include <algorithm>
#include <optional>
#include <sstream>

#include "edgelam/chanpred.hpp"
#include "edgelam/cli.hpp"
#include "edgelam/fedft.hpp"
#include "edgelam/io.hpp"
#include "edgelam/kernels.hpp"
#include "edgelam/micro.hpp"
#include "edgelam/rng.hpp"
#include "edgelam/tparallel.hpp"

namespace edgelam::cli {
namespace {

using nlohmann::json;

constexpr std::uint64_t kTagTpInput = 0x74707820;
constexpr std::uint64_t kTagTpWeight = 0x74707720;

std::string dump(const json& j) { return j.dump(2) + "\n"; }

const json& section(const json& scenario, const std::string& name, const std::string& subcommand) {
  if (!scenario.contains(name)) {
    fail(Errc::missing_section, subcommand + " needs a [" + name + "] section");
  }
  return scenario.at(name);
}

std::vector<std::string> sorted_ids(const netsim::Topology& topo, netsim::NodeRole role) {
  auto ids = topo.node_ids(role);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string pick_server(const netsim::Topology& topo, const json& sec) {
  auto server = sec.at("server").get<std::string>();
  if (!server.empty()) return server;
  const auto servers = sorted_ids(topo, netsim::NodeRole::server);
  if (servers.empty()) fail(Errc::invalid_parameter, "the topology has no server-role node");
  return servers.front();
}

std::vector<std::string> pick_devices(const netsim::Topology& topo, const json& sec) {
  auto devices = sec.at("devices").get<std::vector<std::string>>();
  if (devices.empty()) devices = sorted_ids(topo, netsim::NodeRole::device);
  for (const auto& d : devices) {
    if (!topo.has_node(d)) fail(Errc::invalid_parameter, "unknown device " + d);
  }
  return devices;
}

std::uint64_t seed_of(const json& scenario) { return scenario.at("seed").get<std::uint64_t>(); }

// ---------------------------------------------------------------------------

fedft::FedftConfig fedft_config(const json& scenario, const netsim::Topology& topo) {
  const json& s = section(scenario, "fedft", "fedft");
  fedft::FedftConfig c;
  c.devices = pick_devices(topo, s);
  c.server = pick_server(topo, s);
  c.width = s.at("width");
  c.layers = s.at("layers");
  c.vocab = s.at("vocab");
  c.classes = s.at("classes");
  c.tokens_per_sample = s.at("tokens_per_sample");
  c.rank = s.at("rank");
  c.budget_fraction = s.at("budget_fraction");
  c.lora_alpha = s.at("lora_alpha");
  c.samples_per_device = s.at("samples_per_device");
  c.batch = s.at("batch");
  c.rounds = s.at("rounds");
  c.eval_samples = s.at("eval_samples");
  c.lr = s.at("lr");
  c.privacy = s.at("privacy");
  c.sigma = s.at("sigma");
  c.clip = s.at("clip");
  c.delta = s.at("delta");
  c.alpha_grid = s.at("alpha_grid").get<std::vector<double>>();
  c.seed = seed_of(scenario);
  return c;
}

std::vector<Artifact> run_fedft(const json& scenario) {
  const auto topo = build_topology(scenario);
  const auto report = fedft::run_fedft(fedft_config(scenario, topo), topo);
  return {{"fedft_loss.csv", fedft::loss_csv(report)},
          {"fedft_trace.csv", fedft::trace_csv(report)},
          {"fedft_privacy.csv", fedft::privacy_csv(report)}};
}

// ---------------------------------------------------------------------------

struct TparallelSetup {
  tparallel::GemmTask task;
  std::string server;
  std::vector<std::string> devices;
  tparallel::PlanOptions options;
  std::vector<std::size_t> widths;
};

TparallelSetup tparallel_setup(const json& scenario, const netsim::Topology& topo) {
  const json& s = section(scenario, "tparallel", "tparallel");
  TparallelSetup t;
  t.task = {s.at("m"), s.at("k"), s.at("n")};
  tparallel::validate(t.task);
  t.server = pick_server(topo, s);
  t.devices = pick_devices(topo, s);
  t.options.devices = s.at("devices").get<std::vector<std::string>>();
  t.options.uniform = s.at("uniform");
  t.options.exhaustive_max_devices = s.at("exhaustive_max_devices");
  t.widths = s.at("widths").get<std::vector<std::size_t>>();
  return t;
}

// Explicit widths bypass the planner; zero-width entries are dropped.
tparallel::SplitPlan manual_plan(const TparallelSetup& t, const netsim::Topology& topo) {
  if (t.widths.size() != t.devices.size()) {
    fail(Errc::invalid_width, "tparallel.widths has " + std::to_string(t.widths.size()) +
                                  " entries for " + std::to_string(t.devices.size()) + " devices");
  }
  std::size_t total = 0;
  for (auto w : t.widths) total += w;
  if (total != t.task.n) {
    fail(Errc::invalid_width, "tparallel.widths sum to " + std::to_string(total) + ", not n = " +
                                  std::to_string(t.task.n));
  }
  tparallel::SplitPlan plan;
  plan.server = t.server;
  for (std::size_t i = 0; i < t.devices.size(); ++i) {
    if (t.widths[i] > 0) plan.assignments.push_back({t.devices[i], t.widths[i]});
  }
  std::sort(plan.assignments.begin(), plan.assignments.end(),
            [](const auto& a, const auto& b) { return a.device < b.device; });
  plan.predicted_latency_s = tparallel::plan_latency(t.task, topo, t.server, t.devices, t.widths);
  plan.merge_s = tparallel::merge_latency(t.task, topo, t.server);
  return plan;
}

tparallel::Activation parse_activation(const std::string& name) {
  if (name == "tanh") return tparallel::Activation::tanh;
  if (name == "identity") return tparallel::Activation::identity;
  fail(Errc::invalid_parameter, "unknown activation '" + name + "' (tanh or identity)");
}

Matrix gaussian_matrix(std::size_t r, std::size_t c, Rng rng) {
  Matrix m(r, c);
  for (auto& v : m.flat()) v = gaussian(rng);
  return m;
}

std::vector<Artifact> run_tparallel(const json& scenario) {
  const auto topo = build_topology(scenario);
  const json& s = section(scenario, "tparallel", "tparallel");
  const auto t = tparallel_setup(scenario, topo);
  const bool manual = !t.widths.empty();
  const auto plan = manual ? manual_plan(t, topo) : tparallel::plan_split(t.task, topo, t.server, t.options);
  const std::uint64_t seed = seed_of(scenario);
  const Matrix x = gaussian_matrix(t.task.m, t.task.k, make_rng(seed, kTagTpInput));
  const Matrix w = gaussian_matrix(t.task.k, t.task.n, make_rng(seed, kTagTpWeight));
  const auto exec = tparallel::execute_split(plan, w, x, topo);

  json pj = tparallel::plan_json(plan, t.task);
  if (manual) pj["search"] = "manual";
  pj["measured_latency_s"] = exec.latency_s;
  double err = 0.0;
  for (const auto& r : exec.rows) err = std::max(err, r.max_abs_err);
  pj["max_abs_err"] = err;

  const std::size_t depth = s.at("loop_depth");
  if (depth > 1) {
    // Rows of X are split contiguously across the participating devices.
    std::vector<tparallel::HeldRows> holders;
    const std::size_t d = plan.assignments.size();
    std::size_t start = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t rows = t.task.m / d + (i < t.task.m % d ? 1 : 0);
      Matrix part(rows, t.task.k);
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(x.row(start + r).begin(), x.row(start + r).end(), part.row(r).begin());
      }
      holders.push_back({plan.assignments[i].device, std::move(part)});
      start += rows;
    }
    tparallel::LoopSpec spec{depth, w, parse_activation(s.at("activation"))};
    const auto loop = tparallel::looped_forward(spec, plan, holders, topo);
    pj["loop"] = {{"depth", depth},
                  {"latency_s", loop.latency_s},
                  {"parameter_bytes_per_device", loop.parameter_bytes_per_device},
                  {"uploads", loop.uploads.size()}};
  }
  return {{"tparallel_plan.json", dump(pj)}, {"tparallel_exec.csv", tparallel::exec_csv(exec.rows)}};
}

// ---------------------------------------------------------------------------

struct MicroSetup {
  micro::ServiceDag dag;
  std::vector<micro::RequestFlow> flows;
};

MicroSetup micro_setup(const json& s) {
  std::vector<micro::Microservice> services;
  for (const auto& m : s.at("services")) {
    services.push_back({m.at("id"), m.at("flops"), m.at("memory"), micro::parse_kind(m.at("kind").get<std::string>())});
  }
  std::vector<micro::DagEdge> edges;
  for (const auto& e : s.at("edges")) edges.push_back({e.at("src"), e.at("dst"), e.at("bytes")});
  MicroSetup out{micro::ServiceDag(std::move(services), std::move(edges)), {}};
  for (const auto& f : s.at("flows")) {
    micro::RequestFlow flow;
    flow.id = f.at("id");
    flow.services = f.at("services").get<std::vector<std::string>>();
    flow.source = f.at("source");
    flow.modality = f.at("modality");
    flow.input_bytes = f.at("input_bytes");
    flow.arrival_rate = f.at("arrival_rate");
    for (const auto& id : flow.services) {
      if (!out.dag.has(id)) fail(Errc::invalid_parameter, "flow " + flow.id + " uses unknown service " + id);
    }
    out.flows.push_back(std::move(flow));
  }
  return out;
}

json plan_report(const micro::DeploymentPlan& plan, const MicroSetup& m, const netsim::Topology& topo) {
  json flows = json::object();
  for (const auto& f : m.flows) flows[f.id] = micro::end_to_end_latency(plan, m.dag, topo, f);
  return {{"placement", micro::plan_json(plan)},
          {"mean_latency_s", micro::mean_latency(plan, m.dag, topo, m.flows)},
          {"flow_latency_s", flows},
          {"node_memory", micro::node_memory(plan, m.dag)}};
}

std::vector<Artifact> run_micro_deploy(const json& scenario) {
  const auto topo = build_topology(scenario);
  const json& s = section(scenario, "micro", "micro-deploy");
  const auto m = micro_setup(s);
  const auto method = s.at("deploy").at("method").get<std::string>();
  if (method != "greedy" && method != "bruteforce" && method != "both") {
    fail(Errc::invalid_parameter, "micro.deploy.method must be greedy, bruteforce or both");
  }
  json out;
  out["topological_order"] = micro::validate_dag(m.dag);
  out["plans"] = json::object();
  std::optional<double> greedy_lat, brute_lat;
  if (method != "bruteforce") {
    const auto plan = micro::deploy_greedy(m.dag, topo, m.flows);
    out["plans"]["greedy"] = plan_report(plan, m, topo);
    greedy_lat = out["plans"]["greedy"]["mean_latency_s"].get<double>();
  }
  if (method != "greedy") {
    try {
      const auto plan = micro::deploy_bruteforce(m.dag, topo, m.flows);
      out["plans"]["bruteforce"] = plan_report(plan, m, topo);
      brute_lat = out["plans"]["bruteforce"]["mean_latency_s"].get<double>();
    } catch (const Error& e) {
      // With "both", an instance beyond the guard still yields the greedy plan.
      if (method == "bruteforce" || e.code() != Errc::instance_too_large) throw;
      out["plans"]["bruteforce"] = {{"skipped", std::string(errc_name(e.code()))}, {"reason", e.what()}};
    }
  }
  if (greedy_lat && brute_lat && *brute_lat > 0.0) out["greedy_over_bruteforce"] = *greedy_lat / *brute_lat;
  return {{"deploy.json", dump(out)}};
}

micro::DeploymentPlan plan_from(const json& list, const char* nodes_key) {
  micro::DeploymentPlan plan;
  for (const auto& e : list) {
    const auto service = e.at("service").get<std::string>();
    if (e.at(nodes_key).is_array()) {
      auto nodes = e.at(nodes_key).get<std::vector<std::string>>();
      std::sort(nodes.begin(), nodes.end());
      nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
      plan.placement[service] = nodes;
    } else {
      plan.place(service, e.at(nodes_key).get<std::string>());
    }
  }
  return plan;
}

std::vector<Artifact> run_micro_orchestrate(const json& scenario) {
  const auto topo = build_topology(scenario);
  const json& s = section(scenario, "micro", "micro-orchestrate");
  const auto m = micro_setup(s);
  const json& o = s.at("orchestrate");
  if (o.at("replicas").empty()) {
    fail(Errc::missing_section, "micro-orchestrate needs [[micro.orchestrate.replicas]] entries");
  }
  if (o.at("patterns").empty()) {
    fail(Errc::missing_section, "micro-orchestrate needs [[micro.orchestrate.patterns]] entries");
  }
  const auto plan = plan_from(o.at("replicas"), "nodes");
  micro::check_plan(plan, m.dag, topo);
  std::vector<micro::RequestPattern> patterns;
  for (const auto& p : o.at("patterns")) {
    micro::RequestPattern pat{p.at("name"), p.at("rate_scale").get<std::vector<double>>()};
    if (pat.rate_scale.size() != m.flows.size()) {
      fail(Errc::dimension_mismatch, "pattern " + pat.name + " has " + std::to_string(pat.rate_scale.size()) +
                                         " rate scales for " + std::to_string(m.flows.size()) + " flows");
    }
    patterns.push_back(std::move(pat));
  }
  const auto policies = micro::enumerate_policies(plan, m.dag);
  micro::OrchestrationParams params;
  params.slots = o.at("slots");
  params.slot_s = o.at("slot_s");
  params.cost_weight = o.at("cost_weight");
  params.seed = seed_of(scenario);
  const auto result = micro::robust_orchestrate(plan, m.dag, topo, m.flows, patterns, policies, params);
  return {{"orchestrate.json", dump(micro::orchestrate_json(result, policies, patterns))}};
}

std::vector<Artifact> run_micro_migrate(const json& scenario) {
  const auto topo = build_topology(scenario);
  const json& s = section(scenario, "micro", "micro-migrate");
  const auto m = micro_setup(s);
  const json& g = s.at("migrate");
  const auto path = g.at("user_path").get<std::vector<std::string>>();
  if (path.empty()) fail(Errc::missing_section, "micro-migrate needs micro.migrate.user_path");
  for (const auto& n : path) {
    if (!topo.has_node(n)) fail(Errc::invalid_parameter, "user_path visits unknown node " + n);
  }
  const auto initial = g.at("initial").empty() ? micro::deploy_greedy(m.dag, topo, m.flows)
                                               : plan_from(g.at("initial"), "node");
  micro::check_plan(initial, m.dag, topo);
  micro::VirtualQueue queue;
  queue.budget = g.at("budget");
  queue.v = g.at("v");
  micro::MigrationParams params;
  params.handoff_cost = g.at("handoff_cost");
  const auto trace = micro::run_mobility_trace(initial, m.dag, topo, m.flows, path, queue, params,
                                               g.at("deadline_s"));
  json summary = {{"initial_placement", micro::plan_json(initial)},
                  {"final_placement", micro::plan_json(trace.final_placement)},
                  {"average_cost", trace.average_cost},
                  {"average_latency_s", trace.average_latency},
                  {"latency_variance", trace.latency_variance},
                  {"deadline_miss_fraction", trace.deadline_miss_fraction},
                  {"max_slot_cost", trace.max_slot_cost},
                  {"migrations", trace.migrations}};
  return {{"migrate.csv", micro::migrate_csv(trace)}, {"migrate_summary.json", dump(summary)}};
}

// ---------------------------------------------------------------------------

chanpred::CaseStudyConfig chanpred_config(const json& scenario) {
  const json& s = section(scenario, "chanpred", "chanpred");
  chanpred::CaseStudyConfig c;
  c.kinds.clear();
  for (const auto& k : s.at("kinds")) c.kinds.push_back(chanpred::parse_kind(k.get<std::string>()));
  c.client_counts = s.at("client_counts").get<std::vector<std::size_t>>();
  c.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) c.seeds = {seed_of(scenario)};
  c.base.window = s.at("window");
  c.base.horizon = s.at("horizon");
  c.base.hidden = s.at("hidden");
  c.base.lora_rank = s.at("lora_rank");
  c.base.lora_alpha = s.at("lora_alpha");
  c.base.freeze_base = s.at("freeze_base");
  c.schedule.rounds = s.at("rounds");
  c.schedule.local_steps = s.at("local_steps");
  c.schedule.lr = s.at("lr");
  c.schedule.batch = s.at("batch");
  c.shard_fraction = s.at("shard_fraction");
  c.doppler = s.at("doppler");
  c.sample_period = s.at("sample_period");
  c.num_paths = s.at("num_paths");
  c.pool_series = s.at("pool_series");
  c.series_length = s.at("series_length");
  c.held_out_series = s.at("held_out_series");
  for (auto k : c.kinds) {
    auto spec = c.base;
    spec.kind = k;
    chanpred::validate(spec);
  }
  return c;
}

std::vector<Artifact> run_chanpred(const json& scenario) {
  const auto cfg = chanpred_config(scenario);
  const auto result = chanpred::run_case_study(cfg);
  json outcomes = json::array();
  for (const auto& o : result.outcomes) {
    outcomes.push_back({{"kind", chanpred::kind_name(o.kind)},
                        {"num_clients", o.num_clients},
                        {"seed", o.seed},
                        {"federated_loss", o.federated_loss},
                        {"local_median_loss", o.local_median_loss},
                        {"local_losses", o.local_losses},
                        {"federated_nmse", o.federated_nmse}});
  }
  return {{"fedcp_loss.csv", chanpred::case_study_csv(result)},
          {"fedcp_summary.json", dump({{"outcomes", outcomes}})}};
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

}  // namespace

const std::vector<std::string>& run_subcommands() {
  static const std::vector<std::string> names{"fedft",           "tparallel",     "micro-deploy",
                                              "micro-orchestrate", "micro-migrate", "chanpred"};
  return names;
}

std::string section_of(const std::string& subcommand) {
  if (subcommand.rfind("micro-", 0) == 0) return "micro";
  for (const auto& s : run_subcommands()) {
    if (s == subcommand) return s;
  }
  fail(Errc::invalid_parameter, "unknown subcommand " + subcommand);
}

std::vector<Artifact> run(const std::string& subcommand, const nlohmann::json& scenario) {
  if (subcommand == "fedft") return run_fedft(scenario);
  if (subcommand == "tparallel") return run_tparallel(scenario);
  if (subcommand == "micro-deploy") return run_micro_deploy(scenario);
  if (subcommand == "micro-orchestrate") return run_micro_orchestrate(scenario);
  if (subcommand == "micro-migrate") return run_micro_migrate(scenario);
  if (subcommand == "chanpred") return run_chanpred(scenario);
  fail(Errc::invalid_parameter, "unknown subcommand " + subcommand);
}

std::string manifest(const std::string& subcommand, const nlohmann::json& scenario,
                     const std::vector<Artifact>& artifacts) {
  json outputs = json::array();
  for (const auto& a : artifacts) {
    outputs.push_back({{"file", a.name}, {"bytes", a.content.size()}, {"fnv1a64", hex64(fnv1a64(a.content))}});
  }
  return dump({{"subcommand", subcommand},
               {"isa", std::string(kernels::isa_name(kernels::active().isa))},
               {"config", scenario},
               {"outputs", outputs}});
}

std::vector<std::string> write_run(const std::string& subcommand, const nlohmann::json& scenario,
                                   const std::filesystem::path& dir) {
  const auto artifacts = run(subcommand, scenario);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io_error, "cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::string> written;
  for (const auto& a : artifacts) {
    io::write_file_atomic(dir / a.name, a.content);
    written.push_back(a.name);
  }
  io::write_file_atomic(dir / "manifest.json", manifest(subcommand, scenario, artifacts));
  written.push_back("manifest.json");
  return written;
}

nlohmann::json verify(const nlohmann::json& raw) {
  json report = json::array();
  const auto add = [&](const std::string& sec, Errc code, const std::string& msg) {
    report.push_back({{"section", sec}, {"code", std::string(errc_name(code))}, {"message", msg}});
  };
  for (const auto& p : scenario_problems(raw)) add("config", p.code, p.message);
  if (!raw.is_object()) return report;
  // Sections with schema problems are left out so the rest still get checked.
  json clean = json::object();
  for (const auto& f : scenario_schema()) {
    if (!raw.contains(f.name)) continue;
    const json one = {{f.name, raw.at(f.name)}};
    if (scenario_problems(one).empty()) clean[f.name] = raw.at(f.name);
  }
  const bool topology_rejected = raw.contains("topology") && !clean.contains("topology");
  const json sc = resolve_scenario(clean);
  const auto guarded = [&](const std::string& sec, const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      add(sec, e.code(), e.what());
    }
  };

  std::optional<netsim::Topology> topo;
  if (sc.contains("topology")) guarded("topology", [&] { topo = build_topology(sc); });
  for (const char* name : {"fedft", "tparallel", "micro"}) {
    if (sc.contains(name) && !sc.contains("topology") && !topology_rejected) {
      add(name, Errc::missing_section, std::string("[") + name + "] needs a [topology] section");
    }
  }

  if (sc.contains("fedft") && topo) {
    guarded("fedft", [&] {
      const auto c = fedft_config(sc, *topo);
      if (!topo->has_node(c.server)) fail(Errc::invalid_parameter, "unknown fedft server " + c.server);
      for (const auto& d : c.devices) {
        if (!topo->route(d, c.server)) {
          add("fedft", Errc::unreachable_device, "device " + d + " has no route to " + c.server);
        }
      }
      const std::size_t rank = c.rank > 0 ? c.rank : fedft::budget_rank(c.width, c.layers, c.budget_fraction);
      if (rank == 0 || rank > c.width) {
        add("fedft", Errc::rank_out_of_range, "adapter rank " + std::to_string(rank) + " is outside [1, " +
                                                  std::to_string(c.width) + "]");
      }
    });
  }

  if (sc.contains("tparallel") && topo) {
    guarded("tparallel", [&] {
      const auto t = tparallel_setup(sc, *topo);
      parse_activation(sc.at("tparallel").at("activation"));
      if (!t.widths.empty()) {
        const auto plan = manual_plan(t, *topo);
        for (const auto& a : plan.assignments) {
          const double need = tparallel::shard_storage_bytes(t.task, a.width);
          const double have = topo->node(a.device).storage;
          if (need > have) {
            add("tparallel", Errc::infeasible_storage,
                "device " + a.device + " needs " + io::format_double(need) + " bytes for width " +
                    std::to_string(a.width) + " but has " + io::format_double(have));
          }
        }
        return;
      }
      try {
        tparallel::plan_split(t.task, *topo, t.server, t.options);
      } catch (const Error& e) {
        if (e.code() != Errc::infeasible_storage) throw;
        std::string msg = e.what();
        for (const auto& d : t.devices) {
          const auto cap = tparallel::storage_width(t.task, topo->node(d).storage);
          msg += "; device " + d + " fits " + std::to_string(cap) + " columns";
        }
        add("tparallel", Errc::infeasible_storage, msg);
      }
    });
  }

  if (sc.contains("micro") && topo) {
    guarded("micro", [&] {
      const json& s = sc.at("micro");
      const auto m = micro_setup(s);
      micro::validate_dag(m.dag);
      for (const auto& f : m.flows) {
        if (!topo->has_node(f.source)) {
          add("micro", Errc::invalid_parameter, "flow " + f.id + " starts at unknown node " + f.source);
        }
      }
      const json& o = s.at("orchestrate");
      if (!o.at("replicas").empty()) {
        const auto plan = plan_from(o.at("replicas"), "nodes");
        guarded("micro", [&] { micro::check_plan(plan, m.dag, *topo); });
        for (const auto& svc : m.dag.services()) {
          if (plan.replicas(svc.id) < 2) {
            add("micro", Errc::insufficient_replication, "service " + svc.id + " has fewer than 2 replicas");
          }
        }
        for (const auto& p : o.at("patterns")) {
          if (p.at("rate_scale").size() != m.flows.size()) {
            add("micro", Errc::dimension_mismatch,
                "pattern " + p.at("name").get<std::string>() + " does not have one rate scale per flow");
          }
        }
      }
      const json& g = s.at("migrate");
      for (const auto& n : g.at("user_path")) {
        if (!topo->has_node(n.get<std::string>())) {
          add("micro", Errc::invalid_parameter, "user_path visits unknown node " + n.get<std::string>());
        }
      }
      if (!g.at("initial").empty()) {
        guarded("micro", [&] { micro::check_plan(plan_from(g.at("initial"), "node"), m.dag, *topo); });
      }
    });
  }

  if (sc.contains("chanpred")) {
    guarded("chanpred", [&] {
      const auto c = chanpred_config(sc);
      const std::size_t need = c.base.window + c.base.horizon + 1;
      if (c.series_length < need) {
        fail(Errc::insufficient_data, "series_length " + std::to_string(c.series_length) + " is below W + H + 1 = " +
                                          std::to_string(need));
      }
      const std::size_t pool = c.pool_series * (c.series_length - c.base.window - c.base.horizon + 1);
      for (auto n : c.client_counts) {
        chanpred::FedConfig fc{n, c.shard_fraction, c.schedule, 0};
        chanpred::make_shards(pool, fc);
      }
    });
  }
  return report;
}

std::string error_record(const std::string& subcommand, Errc code, const std::string& message) {
  return json{{"error", {{"code", std::string(errc_name(code))}, {"message", message}}},
              {"subcommand", subcommand}}
      .dump();
}

}  // namespace edgelam::cli
