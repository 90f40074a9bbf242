#include <atomic>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "edgelam/cli.hpp"
#include "edgelam/io.hpp"

namespace edgelam::cli {
namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c, bool outputs) {
  sub->add_option("--config", c.config, "scenario file (TOML subset, JSON, or a run manifest)")
      ->required();
  sub->add_option("--set", c.sets, "override, e.g. --set fedft.rounds=5 (repeatable)");
  if (outputs) {
    sub->add_option("--seed", c.seed, "overrides the scenario seed");
    sub->add_option("--out", c.out, "output directory; defaults to $EDGELAM_OUT, then output_dir");
  }
}

json load_raw(const Common& c) {
  json raw = config::load_file(c.config);
  for (const auto& s : c.sets) config::apply_override(raw, s);
  if (c.seed) raw["seed"] = *c.seed;
  return raw;
}

std::filesystem::path output_root(const Common& c, const json& scenario) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("EDGELAM_OUT"); env && *env) return env;
  return scenario.at("output_dir").get<std::string>();
}

int exit_code(Errc code) {
  return code == Errc::config_parse || code == Errc::missing_section ? 2 : 1;
}

int run_one(const std::string& sub, const Common& c) {
  const json scenario = resolve_scenario(load_raw(c));
  const auto dir = output_root(c, scenario);
  const auto files = write_run(sub, scenario, dir);
  std::cout << json{{"subcommand", sub}, {"out", dir.string()}, {"files", files}}.dump() << "\n";
  return 0;
}

int run_verify(const Common& c) {
  const json report = verify(load_raw(c));
  std::cout << json{{"problems", report}}.dump(2) << "\n";
  return report.empty() ? 0 : 1;
}

// Each (config, seed) pair runs in isolation into <out>/seed-<seed>.
int run_sweep(const std::string& target, const std::vector<std::uint64_t>& seeds, std::size_t jobs,
              const Common& c) {
  const json raw = load_raw(c);
  const json base = resolve_scenario(raw);
  const auto root = output_root(c, base);
  std::vector<json> status(seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        json r = raw;
        r["seed"] = seeds[i];
        const json scenario = resolve_scenario(r);
        const auto dir = root / ("seed-" + std::to_string(seeds[i]));
        write_run(target, scenario, dir);
        status[i] = {{"seed", seeds[i]}, {"status", "ok"}, {"out", dir.string()}};
      } catch (const Error& e) {
        status[i] = {{"seed", seeds[i]}, {"status", std::string(errc_name(e.code()))}, {"message", e.what()}};
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::max<std::size_t>(1, std::min(jobs, seeds.size())); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  bool ok = true;
  for (const auto& s : status) ok = ok && s.at("status") == "ok";
  const json summary = {{"subcommand", target}, {"runs", status}};
  std::filesystem::create_directories(root);
  io::write_file_atomic(root / "sweep.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return ok ? 0 : 1;
}

std::string describe(const std::string& sub) {
  if (sub == "fedft") return "split federated LoRA fine-tuning; writes fedft_loss/trace/privacy.csv";
  if (sub == "tparallel") return "column-split GEMM plan and execution; writes tparallel_plan.json, tparallel_exec.csv";
  if (sub == "micro-deploy") return "microservice placement; writes deploy.json";
  if (sub == "micro-orchestrate") return "robust routing against request patterns; writes orchestrate.json";
  if (sub == "micro-migrate") return "online migration along a user path; writes migrate.csv";
  return "federated channel-prediction case study; writes fedcp_loss.csv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgelam: edge large-model experiment runner"};
  app.require_subcommand(1);
  std::map<std::string, Common> common;
  for (const auto& name : run_subcommands()) add_common(app.add_subcommand(name, describe(name)), common[name], true);
  add_common(app.add_subcommand("verify", "dry-run validation; prints every problem found"), common["verify"], false);
  auto* sweep = app.add_subcommand("sweep", "run one subcommand for several seeds in parallel");
  std::string target;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  sweep->add_option("--run", target, "subcommand to sweep")->required()->check(CLI::IsMember(run_subcommands()));
  sweep->add_option("--seeds", seeds, "seeds to run")->required()->delimiter(',');
  sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  add_common(sweep, common["sweep"], true);

  std::string current = "edgelam";
  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands()) current = sub->get_name();
    if (current == "verify") return run_verify(common.at(current));
    if (current == "sweep") return run_sweep(target, seeds, jobs, common.at(current));
    return run_one(current, common.at(current));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}, {"subcommand", current}}.dump()
              << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << error_record(current, e.code(), e.what()) << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}, {"subcommand", current}}.dump()
              << "\n";
    return 1;
  }
}

}  // namespace edgelam::cli
