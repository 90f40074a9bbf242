#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "edgelam/cli.hpp"
#include "edgelam/config.hpp"
#include "edgelam/error.hpp"
#include "edgelam/io.hpp"

using namespace edgelam;
using nlohmann::json;

namespace {

const std::filesystem::path kDemo = std::filesystem::path(EDGELAM_SOURCE_DIR) / "configs" / "demo.toml";

json demo_raw() { return config::load_file(kDemo); }

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::io_error;
}

std::string artifact(const std::vector<cli::Artifact>& files, const std::string& name) {
  for (const auto& a : files)
    if (a.name == name) return a.content;
  FAIL("missing artifact " << name);
  return {};
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

bool has_problem(const json& report, const std::string& code, const std::string& needle = "") {
  for (const auto& p : report)
    if (p.at("code") == code && p.at("message").get<std::string>().find(needle) != std::string::npos) return true;
  return false;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("edgelam_test_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("toml subset") {
  const json j = config::parse_toml(R"(
# comment
seed = 3
name = "a # not a comment"
lit = 'c:\path'
x = -1.5e3
big = inf
flag = true
list = [1, 2,
        3]
pairs = [[0.0, 1e7], [0.5, 4e7]]
a.b = 2

[t]
inline = { k = "v", n = 1 }

[[t.rows]]
id = "r0"

[[t.rows]]
id = "r1"
)");
  CHECK(j["seed"] == 3);
  CHECK(j["name"] == "a # not a comment");
  CHECK(j["lit"] == "c:\\path");
  CHECK(j["x"].get<double>() == -1500.0);
  CHECK(std::isinf(j["big"].get<double>()));
  CHECK(j["flag"] == true);
  CHECK(j["list"] == json::array({1, 2, 3}));
  CHECK(j["pairs"][1][1].get<double>() == 4e7);
  CHECK(j["a"]["b"] == 2);
  CHECK(j["t"]["inline"]["k"] == "v");
  REQUIRE(j["t"]["rows"].size() == 2);
  CHECK(j["t"]["rows"][1]["id"] == "r1");
}

TEST_CASE("toml errors carry the line") {
  for (const char* bad : {"x = ", "x = [1, 2", "[t\nx=1", "x = \"open", "x = 1\nx = 2", "= 3"}) {
    CAPTURE(bad);
    try {
      config::parse_toml(bad);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::config_parse);
      CHECK(std::string(e.what()).find("line ") != std::string::npos);
    }
  }
}

TEST_CASE("json text and manifests") {
  CHECK(config::parse_text(R"({"seed": 4})")["seed"] == 4);
  const json m = config::parse_text(R"({"subcommand":"fedft","config":{"seed":5},"outputs":[]})");
  CHECK(m == json{{"seed", 5}});
  CHECK(code_of([] { config::parse_text("{bad json"); }) == Errc::config_parse);
  CHECK(code_of([] { config::load_file("/nonexistent/edgelam.toml"); }) == Errc::io_error);
}

TEST_CASE("overrides") {
  json raw = demo_raw();
  config::apply_override(raw, "fedft.rounds=5");
  config::apply_override(raw, "topology.nodes.1.storage=2.5e9");
  config::apply_override(raw, "micro.deploy.method=greedy");
  config::apply_override(raw, "chanpred.kinds=[\"gru_cell\"]");
  CHECK(raw["fedft"]["rounds"] == 5);
  CHECK(raw["topology"]["nodes"][1]["storage"].get<double>() == 2.5e9);
  CHECK(raw["micro"]["deploy"]["method"] == "greedy");
  CHECK(raw["chanpred"]["kinds"] == json::array({"gru_cell"}));
  CHECK(code_of([&] { config::apply_override(raw, "no_equals_sign"); }) == Errc::config_parse);
  CHECK(code_of([&] { config::apply_override(raw, "topology.nodes.99.storage=1"); }) == Errc::config_parse);
}

TEST_CASE("edit distance") {
  CHECK(config::levenshtein("", "abc") == 3);
  CHECK(config::levenshtein("kitten", "sitting") == 3);
  CHECK(config::levenshtein("sgima", "sigma") == 2);
  CHECK(config::nearest("sgima", {"rounds", "sigma", "clip"}) == "sigma");
  CHECK(config::nearest("x", {}).empty());
}

TEST_CASE("unknown keys are rejected with a suggestion") {
  json raw = demo_raw();
  config::apply_override(raw, "fedft.sgima=2");
  try {
    cli::resolve_scenario(raw);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config_parse);
    const std::string msg = e.what();
    CHECK(msg.find("fedft.sgima") != std::string::npos);
    CHECK(msg.find("fedft.sigma") != std::string::npos);
  }
}

TEST_CASE("schema defaults and type checks") {
  const json sc = cli::resolve_scenario(demo_raw());
  CHECK(sc["seed"] == 7);
  CHECK(sc["fedft"]["rounds"] == 20);
  CHECK(sc["fedft"].contains("lr"));
  CHECK(sc["tparallel"]["m"] == 32);
  CHECK(sc["micro"]["deploy"]["method"] == "both");

  json raw = demo_raw();
  raw["fedft"]["rounds"] = "many";
  raw["tparallel"]["m"] = -3;
  const auto problems = cli::scenario_problems(raw);
  CHECK(problems.size() == 2);
  for (const auto& p : problems) CHECK(p.code == Errc::config_parse);

  // Absent sections stay absent.
  json bare = demo_raw();
  bare.erase("chanpred");
  CHECK_FALSE(cli::resolve_scenario(bare).contains("chanpred"));
}

TEST_CASE("missing sections") {
  json raw = demo_raw();
  raw.erase("topology");
  const json sc = cli::resolve_scenario(raw);
  CHECK(code_of([&] { cli::build_topology(sc); }) == Errc::missing_section);
  CHECK(code_of([&] { cli::run("fedft", sc); }) == Errc::missing_section);

  json no_fedft = demo_raw();
  no_fedft.erase("fedft");
  CHECK(code_of([&] { cli::run("fedft", cli::resolve_scenario(no_fedft)); }) == Errc::missing_section);
  CHECK(code_of([&] { cli::run("nonsense", cli::resolve_scenario(demo_raw())); }) == Errc::invalid_parameter);
}

TEST_CASE("fedft run writes one loss row per round") {
  json raw = demo_raw();
  config::apply_override(raw, "fedft.rounds=6");
  const auto files = cli::run("fedft", cli::resolve_scenario(raw));
  const std::string loss = artifact(files, "fedft_loss.csv");
  CHECK(line_count(loss) == 6 + 1);
  CHECK(line_count(artifact(files, "fedft_privacy.csv")) == 6 + 1);
}

TEST_CASE("runs are deterministic and seed-sensitive") {
  json raw = demo_raw();
  config::apply_override(raw, "fedft.rounds=4");
  const json sc = cli::resolve_scenario(raw);
  for (const std::string sub : {"fedft", "tparallel", "micro-deploy", "micro-migrate"}) {
    CAPTURE(sub);
    const auto a = cli::run(sub, sc);
    const auto b = cli::run(sub, sc);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].content == b[i].content);
    }
  }
  json other = raw;
  other["seed"] = 8;
  CHECK(artifact(cli::run("fedft", sc), "fedft_loss.csv") !=
        artifact(cli::run("fedft", cli::resolve_scenario(other)), "fedft_loss.csv"));
}

TEST_CASE("a manifest reproduces its run") {
  json raw = demo_raw();
  config::apply_override(raw, "fedft.rounds=3");
  const json sc = cli::resolve_scenario(raw);
  const auto dir = scratch("manifest");
  const auto names = cli::write_run("fedft", sc, dir);
  CHECK(names.back() == "manifest.json");

  const json man = json::parse(io::read_file(dir / "manifest.json"));
  CHECK(man["subcommand"] == "fedft");
  REQUIRE(man["outputs"].size() == names.size() - 1);
  for (const auto& o : man["outputs"])
    CHECK(o["bytes"].get<std::size_t>() == io::read_file(dir / o["file"].get<std::string>()).size());

  const json again = cli::resolve_scenario(config::load_file(dir / "manifest.json"));
  CHECK(again == sc);
  const auto dir2 = scratch("manifest2");
  cli::write_run("fedft", again, dir2);
  for (const auto& n : names) CHECK(io::read_file(dir / n) == io::read_file(dir2 / n));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("verify") {
  CHECK(cli::verify(demo_raw()).empty());

  SUBCASE("cycle") {
    json raw = demo_raw();
    raw["micro"]["edges"].push_back({{"src", "decoder"}, {"dst", "img_encoder"}, {"bytes", 1.0}});
    CHECK(has_problem(cli::verify(raw), "cycle-detected"));
  }
  SUBCASE("infeasible storage names the device") {
    json raw = demo_raw();
    raw["tparallel"]["widths"] = json::array({8, 8, 8, 40});
    for (std::size_t i = 1; i <= 4; ++i) raw["topology"]["nodes"][i]["storage"] = 1000.0;
    CHECK(has_problem(cli::verify(raw), "infeasible-storage", "device dev3"));
  }
  SUBCASE("planner infeasibility lists capacities") {
    json raw = demo_raw();
    for (std::size_t i = 1; i <= 4; ++i) raw["topology"]["nodes"][i]["storage"] = 1000.0;
    CHECK(has_problem(cli::verify(raw), "infeasible-storage", "device dev0 fits"));
  }
  SUBCASE("several problems are collected") {
    json raw = demo_raw();
    raw["fedft"]["sgima"] = 1.0;
    raw["micro"]["edges"].push_back({{"src", "decoder"}, {"dst", "img_encoder"}, {"bytes", 1.0}});
    raw["micro"]["migrate"]["user_path"] = json::array({"dev0", "nowhere"});
    const json report = cli::verify(raw);
    CHECK(has_problem(report, "config-parse", "fedft.sigma"));
    CHECK(has_problem(report, "cycle-detected"));
    CHECK(report.size() >= 2);
  }
}

TEST_CASE("error record") {
  const json rec = json::parse(cli::error_record("fedft", Errc::unreachable_device, "dev9"));
  CHECK(rec["error"]["code"] == "unreachable-device");
  CHECK(rec["error"]["message"] == "dev9");
  CHECK(rec["subcommand"] == "fedft");
}

TEST_CASE("main: exit codes and output root") {
  const auto out = scratch("main");
  const std::string cfg = kDemo.string();
  auto call = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data());
  };
  CHECK(call({"edgelam", "tparallel", "--config", cfg, "--out", out.string()}) == 0);
  CHECK(std::filesystem::exists(out / "tparallel_plan.json"));
  CHECK(call({"edgelam", "fedft", "--config", cfg, "--set", "fedft.sgima=1", "--out", out.string()}) == 2);
  CHECK(call({"edgelam", "fedft", "--config", "/nonexistent.toml"}) == 1);
  CHECK(call({"edgelam", "fedft"}) == 2);
  CHECK(call({"edgelam", "verify", "--config", cfg}) == 0);

  const auto env_out = scratch("env");
  ::setenv("EDGELAM_OUT", env_out.c_str(), 1);
  CHECK(call({"edgelam", "micro-deploy", "--config", cfg}) == 0);
  ::unsetenv("EDGELAM_OUT");
  CHECK(std::filesystem::exists(env_out / "deploy.json"));
  CHECK(std::filesystem::exists(env_out / "manifest.json"));

  CHECK(call({"edgelam", "sweep", "--run", "tparallel", "--seeds", "1,2", "--jobs", "2", "--config", cfg, "--out",
              out.string()}) == 0);
  CHECK(std::filesystem::exists(out / "seed-2" / "tparallel_plan.json"));
  CHECK(std::filesystem::exists(out / "sweep.json"));
  std::filesystem::remove_all(out);
  std::filesystem::remove_all(env_out);
}
