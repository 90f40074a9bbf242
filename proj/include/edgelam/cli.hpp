#pragma once

// Experiment runner behind the `edgelam` executable.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgelam/config.hpp"
#include "edgelam/error.hpp"
#include "edgelam/netsim.hpp"

namespace edgelam::cli {

// Subcommands that produce artifacts, in help order.
const std::vector<std::string>& run_subcommands();

// Section a run subcommand reads; throws invalid-parameter for an unknown name.
std::string section_of(const std::string& subcommand);

const std::vector<config::Field>& scenario_schema();

// Defaults filled, unknown keys rejected. Throws config-parse.
nlohmann::json resolve_scenario(const nlohmann::json& raw);

// Every schema problem, collected.
std::vector<config::Problem> scenario_problems(const nlohmann::json& raw);

// Throws missing-section when the scenario has no topology table.
netsim::Topology build_topology(const nlohmann::json& scenario);

struct Artifact {
  std::string name;
  std::string content;
};

// Runs one subcommand on a resolved scenario and returns its files in a
// fixed order. Throws missing-section and any subsystem error.
std::vector<Artifact> run(const std::string& subcommand, const nlohmann::json& scenario);

// The manifest echoes the resolved scenario, so it can be passed back as
// --config to reproduce the run.
std::string manifest(const std::string& subcommand, const nlohmann::json& scenario,
                     const std::vector<Artifact>& artifacts);

// run + manifest.json, each written atomically under `dir`. Returns the file
// names written.
std::vector<std::string> write_run(const std::string& subcommand, const nlohmann::json& scenario,
                                   const std::filesystem::path& dir);

// Dry run: schema problems, then feasibility checks of every present section.
// Returns a list of {"section", "code", "message"}; empty when valid.
nlohmann::json verify(const nlohmann::json& raw);

// {"error": {"code", "message"}, "subcommand"} on one line.
std::string error_record(const std::string& subcommand, Errc code, const std::string& message);

// Process entry point; returns the exit status.
int main(int argc, char** argv);

}  // namespace edgelam::cli
