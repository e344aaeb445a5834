#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "slsim/cli.hpp"

using namespace slsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(std::string_view text) {
  try {
    parse_config(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "slsim_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

const char* kSmall =
    "preset = plr-curves\n"
    "sweep_values = 1, 4\n"
    "seeds = 1\n"
    "sim_duration_s = 2\n";

}  // namespace

TEST_CASE("an empty config yields the default scenario") {
  const ExperimentSpec s = parse_config("", "empty");
  const ScenarioConfig& c = s.base;
  CHECK(c.n_ues == 200);
  CHECK(c.radio.tx_power_dbm == 23.0);
  CHECK(c.radio.mcs_pssch == 6);
  CHECK(c.radio.slot_duration_us == 500.0);
  CHECK(c.radio.n_subchannels == 10);
  CHECK(c.radio.packet_size_bytes == 290);
  CHECK(c.comm_range_m == 200.0);
  CHECK(c.plr_qos == 0.01);
  CHECK(c.ack_delay_ms == 2.0);
  CHECK(c.platoon_size == 5);
  CHECK(c.latency_budget_ms == 10.0);
  CHECK(s.preset == Preset::SingleRun);
  CHECK(s.search.lambda_max == 50.0);
  CHECK(s.search.resolution == 0.1);
}

TEST_CASE("comments, blanks and values") {
  const ExperimentSpec s = parse_config(
      "# highway\n\n  lambda_b_per_s = 3.4   # busy\npsfch_enabled = true\nseeds = 4, 5,6\n", "x");
  CHECK(s.base.lambda_b == 3.4);
  CHECK(s.base.psfch_enabled);
  CHECK(s.search.seeds == std::vector<std::uint64_t>{4, 5, 6});
}

TEST_CASE("config errors name the line") {
  CHECK(error_of("latency_budget_ms = 0.2\n").find("t.cfg:1:") == 0);
  CHECK(error_of("latency_budget_ms = 0.2\n").find("slot") != std::string::npos);
  const std::string dup = error_of("n_ues = 100\n\nn_ues = 120\n");
  CHECK(dup.find("t.cfg:3:") == 0);
  CHECK(dup.find("line 1") != std::string::npos);
  CHECK(dup.find("line 3") != std::string::npos);
  CHECK(error_of("# x\nfoo = 1\n").find("t.cfg:2: unknown key 'foo'") == 0);
  CHECK(error_of("n_ues = many\n").find("t.cfg:1: n_ues:") == 0);
  CHECK(error_of("plr_qos = 1.5\n").find("t.cfg:1:") == 0);
  CHECK(error_of("just words\n").find("t.cfg:1:") == 0);
  CHECK(error_of("n_subchannels = 10\nsubcarrier_spacing_khz = 15\n").find("t.cfg:2:") == 0);
  CHECK(error_of("subcarrier_spacing_khz = 15\nslot_duration_us = 1000\n").empty());
  CHECK(error_of("platoon_size = 300\n").find("t.cfg:1:") == 0);
  CHECK(error_of("preset = fig7\n").find("t.cfg:1:") == 0);
  CHECK(error_of("preset = capacity-vs-platoon-size\nsweep_values = 2.5\n").find("t.cfg:2:") == 0);
  CHECK_THROWS_AS(load_config("/nonexistent/dir/x.cfg"), ConfigError);
}

TEST_CASE("frozen column order") {
  const std::vector<std::string> expect{
      "preset", "axis", "axis_value", "psfch", "k_g", "lambda_g_per_s", "capacity_per_s",
      "is_best_k", "plr_b", "plr_b_lo", "plr_b_hi", "plr_b_n", "plr_g", "plr_g_lo", "plr_g_hi",
      "plr_g_n", "occupancy", "seeds", "status"};
  CHECK(csv_columns() == expect);
}

TEST_CASE("JSON lines mirror CSV rows") {
  ResultRow r;
  r.preset = "capacity-vs-lambda_b";
  r.axis = "lambda_b_per_s";
  r.axis_value = 1.8;
  r.psfch = true;
  r.k_g = 3;
  r.lambda_g = 12.5;
  r.capacity = 12.5;
  r.is_best_k = true;
  r.plr_b = {0.004, 0.003, 0.005, 9000, 120};
  r.seeds = {1, 2, 3};
  const auto j = nlohmann::ordered_json::parse(jsonl_line(r));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == csv_columns());
  CHECK(csv_line(r) ==
        "capacity-vs-lambda_b,lambda_b_per_s,1.8,on,3,12.5,12.5,1,0.004,0.003,0.005,9000,,,,0,0,1;2;3,ok");
  CHECK(j["plr_g"].is_null());
  CHECK(j["plr_b_n"] == 9000);
  CHECK(j["seeds"].size() == 3);
}

TEST_CASE("config hash tracks the scenario, not the output path") {
  ExperimentSpec a = parse_config(kSmall, "a");
  ExperimentSpec b = a;
  b.output_path = "elsewhere.csv";
  CHECK(config_hash(a) == config_hash(b));
  b.base.lambda_b = 2.0;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("output is byte-identical across runs") {
  for (auto fmt : {OutputFormat::Csv, OutputFormat::Jsonl}) {
    ExperimentSpec s = parse_config(kSmall, "small");
    s.format = fmt;
    s.output_path = scratch("a.out").string();
    run_experiment(s);
    s.output_path = scratch("b.out").string();
    run_experiment(s);
    const std::string a = slurp(scratch("a.out"));
    CHECK(!a.empty());
    CHECK(a == slurp(scratch("b.out")));
  }
  CHECK(slurp(scratch("a.out")).rfind("{\"meta\":", 0) == 0);
}

TEST_CASE("header and rows") {
  ExperimentSpec s = parse_config(kSmall, "small");
  s.output_path = scratch("h.csv").string();
  const auto rows = run_experiment(s);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].axis_value == 1.0);
  CHECK(rows[1].axis_value == 4.0);
  const std::string text = slurp(s.output_path);
  CHECK(text.rfind("# slsim ", 0) == 0);
  CHECK(text.find("# config_hash: ") != std::string::npos);
  CHECK(text.find("# config: lambda_b_per_s = 1.8\n") != std::string::npos);
  CHECK(text.find("\npreset,axis,axis_value,") != std::string::npos);
  CHECK(text.find("\nplr-curves,lambda_g_per_s,4,off,3,4,") != std::string::npos);
}

TEST_CASE("resume keeps finished sweep values") {
  ExperimentSpec s = parse_config(kSmall, "small");
  s.output_path = scratch("full.csv").string();
  run_experiment(s);
  const std::string full = slurp(s.output_path);

  // Simulate an interrupted run: drop the last row, add the marker.
  std::string partial = full.substr(0, full.rfind('\n', full.size() - 2) + 1);
  partial += "# incomplete: resume_from lambda_g_per_s = 4\n";
  s.output_path = scratch("partial.csv").string();
  {
    std::ofstream out(s.output_path, std::ios::binary);
    out << partial;
  }
  RunControl ctl;
  ctl.resume = true;
  const auto rows = run_experiment(s, ctl);
  CHECK(rows.size() == 1);
  CHECK(slurp(s.output_path) == full);

  // A different config starts over.
  ExperimentSpec other = s;
  other.base.lambda_b = 1.0;
  CHECK(run_experiment(other, ctl).size() == 2);
}
