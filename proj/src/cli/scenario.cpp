#include "edgelam/chanpred.hpp"
#include "edgelam/cli.hpp"
#include "edgelam/fedft.hpp"
#include "edgelam/tparallel.hpp"

namespace edgelam::cli {
namespace {

using config::Type;
using config::optional;
using config::required;
using config::table;
using config::table_list;
using nlohmann::json;

std::vector<config::Field> build_schema() {
  const fedft::FedftConfig fd;
  const tparallel::PlanOptions tp;
  const chanpred::CaseStudyConfig cs;
  const chanpred::PredictorSpec ps;
  json kinds = json::array();
  for (auto k : cs.kinds) kinds.push_back(std::string(chanpred::kind_name(k)));

  return {
      optional("seed", Type::integer, 0),
      optional("output_dir", Type::string, "out"),
      table("topology",
            {
                optional("horizon_s", Type::number, 0.0),  // 0: unbounded
                optional("step_s", Type::number, netsim::kDefaultRateStep),
                table_list("nodes",
                           {
                               required("id", Type::string),
                               required("compute_rate", Type::number),
                               required("storage", Type::number),
                               optional("role", Type::string, "device"),
                           },
                           true),
                table_list("links",
                           {
                               required("src", Type::string),
                               required("dst", Type::string),
                               optional("model", Type::string, "constant"),  // constant | steps | rayleigh
                               optional("rate_bps", Type::number, 1e6),
                               optional("prop_delay_s", Type::number, 0.0),
                               optional("schedule", Type::pair_list, json::array()),
                               optional("bandwidth_hz", Type::number, 1e6),
                               optional("mean_snr_db", Type::number, 10.0),
                           }),
            }),
      table("fedft",
            {
                optional("devices", Type::string_list, json::array()),
                optional("server", Type::string, ""),
                optional("width", Type::integer, fd.width),
                optional("layers", Type::integer, fd.layers),
                optional("vocab", Type::integer, fd.vocab),
                optional("classes", Type::integer, fd.classes),
                optional("tokens_per_sample", Type::integer, fd.tokens_per_sample),
                optional("rank", Type::integer, fd.rank),
                optional("budget_fraction", Type::number, fd.budget_fraction),
                optional("lora_alpha", Type::number, fd.lora_alpha),
                optional("samples_per_device", Type::integer, fd.samples_per_device),
                optional("batch", Type::integer, fd.batch),
                optional("rounds", Type::integer, fd.rounds),
                optional("eval_samples", Type::integer, fd.eval_samples),
                optional("lr", Type::number, fd.lr),
                optional("privacy", Type::boolean, fd.privacy),
                optional("sigma", Type::number, fd.sigma),
                optional("clip", Type::number, fd.clip),
                optional("delta", Type::number, fd.delta),
                optional("alpha_grid", Type::number_list, fd.alpha_grid),
            }),
      table("tparallel",
            {
                optional("m", Type::integer, 32),
                optional("k", Type::integer, 64),
                optional("n", Type::integer, 64),
                optional("devices", Type::string_list, json::array()),
                optional("server", Type::string, ""),
                optional("uniform", Type::boolean, tp.uniform),
                optional("exhaustive_max_devices", Type::integer, tp.exhaustive_max_devices),
                optional("widths", Type::integer_list, json::array()),  // explicit plan
                optional("loop_depth", Type::integer, 1),
                optional("activation", Type::string, "tanh"),
            }),
      table("micro",
            {
                table_list("services",
                           {
                               required("id", Type::string),
                               required("flops", Type::number),
                               required("memory", Type::number),
                               optional("kind", Type::string, "backbone"),
                           },
                           true),
                table_list("edges",
                           {
                               required("src", Type::string),
                               required("dst", Type::string),
                               optional("bytes", Type::number, 0.0),
                           }),
                table_list("flows",
                           {
                               required("id", Type::string),
                               required("services", Type::string_list),
                               required("source", Type::string),
                               optional("modality", Type::string, "text"),
                               optional("input_bytes", Type::number, 0.0),
                               optional("arrival_rate", Type::number, 1.0),
                           },
                           true),
                table("deploy", {optional("method", Type::string, "both")}),  // greedy | bruteforce | both
                table("orchestrate",
                      {
                          table_list("replicas", {required("service", Type::string),
                                                  required("nodes", Type::string_list)}),
                          table_list("patterns", {required("name", Type::string),
                                                  required("rate_scale", Type::number_list)}),
                          optional("slots", Type::integer, 50),
                          optional("slot_s", Type::number, 1.0),
                          optional("cost_weight", Type::number, 0.1),
                      }),
                table("migrate",
                      {
                          optional("v", Type::number, 10.0),
                          optional("budget", Type::number, 0.1),
                          optional("handoff_cost", Type::number, 0.0),
                          optional("deadline_s", Type::number, 1.0),
                          optional("user_path", Type::string_list, json::array()),
                          table_list("initial", {required("service", Type::string),
                                                 required("node", Type::string)}),
                      }),
            }),
      table("chanpred",
            {
                optional("kinds", Type::string_list, kinds),
                optional("client_counts", Type::integer_list, cs.client_counts),
                optional("seeds", Type::integer_list, json::array()),  // empty: the scenario seed
                optional("window", Type::integer, ps.window),
                optional("horizon", Type::integer, ps.horizon),
                optional("hidden", Type::integer, ps.hidden),
                optional("lora_rank", Type::integer, ps.lora_rank),
                optional("lora_alpha", Type::number, ps.lora_alpha),
                optional("freeze_base", Type::boolean, ps.freeze_base),
                optional("rounds", Type::integer, cs.schedule.rounds),
                optional("local_steps", Type::integer, cs.schedule.local_steps),
                optional("lr", Type::number, cs.schedule.lr),
                optional("batch", Type::integer, cs.schedule.batch),
                optional("shard_fraction", Type::number, cs.shard_fraction),
                optional("doppler", Type::number, cs.doppler),
                optional("sample_period", Type::number, cs.sample_period),
                optional("num_paths", Type::integer, cs.num_paths),
                optional("pool_series", Type::integer, cs.pool_series),
                optional("series_length", Type::integer, cs.series_length),
                optional("held_out_series", Type::integer, cs.held_out_series),
            }),
  };
}

}  // namespace

const std::vector<config::Field>& scenario_schema() {
  static const std::vector<config::Field> schema = build_schema();
  return schema;
}

namespace {

// Sections are optional as a whole: an absent section stays absent instead of
// being filled with defaults.
json resolve_impl(const json& raw, std::vector<config::Problem>* problems) {
  if (!raw.is_object()) {
    const std::string msg = "the config must be a table";
    if (!problems) fail(Errc::config_parse, msg);
    problems->push_back({Errc::config_parse, msg});
    return json::object();
  }
  std::vector<config::Field> present;
  for (const auto& f : scenario_schema()) {
    if (f.type != Type::table || raw.contains(f.name)) present.push_back(f);
  }
  // Keys matching no field at all still get the full candidate list.
  for (const auto& [key, _] : raw.items()) {
    bool known = false;
    for (const auto& f : scenario_schema()) known = known || f.name == key;
    if (!known) {
      std::vector<std::string> names;
      for (const auto& f : scenario_schema()) names.push_back(f.name);
      const std::string msg =
          "unknown key '" + key + "'; did you mean '" + config::nearest(key, names) + "'?";
      if (!problems) fail(Errc::config_parse, msg);
      problems->push_back({Errc::config_parse, msg});
    }
  }
  json filtered = json::object();
  for (const auto& f : present) {
    if (raw.contains(f.name)) filtered[f.name] = raw.at(f.name);
  }
  return config::resolve_table(filtered, present, "", problems);
}

}  // namespace

nlohmann::json resolve_scenario(const nlohmann::json& raw) { return resolve_impl(raw, nullptr); }

std::vector<config::Problem> scenario_problems(const nlohmann::json& raw) {
  std::vector<config::Problem> out;
  resolve_impl(raw, &out);
  return out;
}

netsim::Topology build_topology(const nlohmann::json& scenario) {
  if (!scenario.contains("topology")) fail(Errc::missing_section, "the scenario has no [topology] section");
  const json& t = scenario.at("topology");
  json table = json::object();
  if (t.at("horizon_s").get<double>() > 0.0) table["horizon_s"] = t.at("horizon_s");
  table["step_s"] = t.at("step_s");
  table["nodes"] = t.at("nodes");
  table["links"] = json::array();
  for (const auto& l : t.at("links")) {
    json link = {{"src", l.at("src")}, {"dst", l.at("dst")}, {"prop_delay_s", l.at("prop_delay_s")}};
    const auto model = l.at("model").get<std::string>();
    if (model == "constant") {
      link["rate_bps"] = l.at("rate_bps");
    } else if (model == "steps") {
      if (l.at("schedule").empty()) {
        fail(Errc::config_parse, "link " + l.at("src").get<std::string>() + "-" +
                                     l.at("dst").get<std::string>() + " uses model 'steps' without a schedule");
      }
      link["schedule"] = l.at("schedule");
    } else if (model == "rayleigh") {
      link["fading"] = {{"bandwidth_hz", l.at("bandwidth_hz")}, {"mean_snr_db", l.at("mean_snr_db")}};
    } else {
      fail(Errc::config_parse, "unknown link model '" + model + "' (constant, steps or rayleigh)");
    }
    table["links"].push_back(std::move(link));
  }
  return netsim::topology_from_json(table, scenario.at("seed").get<std::uint64_t>());
}

}  // namespace edgelam::cli
