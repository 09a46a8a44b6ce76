#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "doctest.h"
#include "polrank/error.hpp"

using namespace polrank;
using namespace polrank::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("polrank_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_grid() {
  return json::parse(R"({
    "env": {"name": "grid-crossing", "params": {"horizon": 322, "randomize_layout": true}},
    "policy": {"name": "scripted_grid"},
    "abstraction": {"kind": "identity"},
    "mutation": {"suite_size": 300, "mu": 0.2, "condition": {"reward_at_least": 0.8},
                 "default_action": "repeat_previous", "master_seed": 1},
    "eval": {"n_test": 10, "seed": 3, "r_grid": [0.0, 0.5, 1.0]},
    "output_dir": "unused"
  })");
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POLRANK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("overrides set leaves by dotted path") {
  json j = small_grid();
  apply_override(j, "mutation.mu=0.3");
  apply_override(j, "eval.unseen_state_rule=use_policy");
  apply_override(j, "env.params.randomize_layout=false");
  apply_override(j, "abstraction.kind=\"identity\"");
  CHECK(j["mutation"]["mu"] == 0.3);
  CHECK(j["eval"]["unseen_state_rule"] == "use_policy");
  CHECK(j["env"]["params"]["randomize_layout"] == false);
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), ConfigError);
  const auto c = parse_config(j);
  CHECK(c.mutation.mu == 0.3);
  CHECK(c.eval.unseen_state_rule == UnseenStateRule::kUsePolicy);
}

TEST_CASE("config errors name the field path") {
  auto expect_path = [](json j, const std::string& prefix) {
    try {
      parse_config(j);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).rfind(prefix, 0) == 0);
    }
  };
  json j = small_grid();
  j["mutation"]["mu"] = 2.0;
  expect_path(j, "mutation.mu");
  j = small_grid();
  j["eval"]["colour"] = 1;
  expect_path(j, "eval");
  j = small_grid();
  j["env"]["name"] = "atari";
  expect_path(j, "env.name");
  j = small_grid();
  j["policy"]["name"] = "scripted_cartpole";
  expect_path(j, "policy");
  j = small_grid();
  j["mutation"].erase("suite_size");
  expect_path(j, "mutation.suite_size");
  j = small_grid();
  j["ranking"] = {{"executed_role", "sideways"}};
  expect_path(j, "ranking");
}

TEST_CASE("bundled configs parse with the documented parameters") {
  const auto grid = load_config(std::string(POLRANK_SOURCE_DIR) + "/configs/grid.json");
  CHECK(grid.mutation.suite_size == 5000);
  CHECK(grid.mutation.mu == 0.2);
  CHECK(grid.mutation.condition.threshold() == 0.8);
  CHECK(grid.eval.n_test == 100);
  const auto cart = load_config(std::string(POLRANK_SOURCE_DIR) + "/configs/cartpole.json");
  CHECK(cart.mutation.suite_size == 5000);
  CHECK(cart.mutation.mu == 0.4);
  CHECK(cart.mutation.condition.threshold() == 200);
  CHECK(cart.eval.n_test == 100);
  CHECK_NOTHROW(load_config(std::string(POLRANK_SOURCE_DIR) + "/configs/chain.json"));
}

TEST_CASE("rank then sweep writes the documented artifacts") {
  const auto dir = scratch("pipeline");
  const auto config = parse_config(small_grid());
  CommandOptions o;
  o.out_dir = dir.string();
  o.write_suite = true;
  std::ostringstream log;
  CHECK(cmd_rank(config, o, log) == 0);
  CHECK(fs::exists(dir / "suite.jsonl"));
  const auto meta = json::parse(slurp(dir / "suite_meta.json"));
  CHECK(meta["suite_size"] == 300);
  CHECK(meta.contains("pass_rate"));
  CHECK(meta["executed_role"] == "mutated");
  const auto ranking = slurp(dir / "ranking.csv");
  const auto rows = std::count(ranking.begin(), ranking.end(), '\n') - 1;
  CHECK(rows == meta["encountered_states"].get<long>());

  CHECK(cmd_sweep(config, o, log) == 0);
  const auto sweep = slurp(dir / "sweep.csv");
  for (const char* m : {"ochiai", "tarantula", "zoltar", "wong2", "freqvis", "rand", "portfolio"}) {
    CHECK(sweep.find(std::string("\n") + m + ",") != std::string::npos);
  }
  const auto thresholds = slurp(dir / "thresholds.csv");
  CHECK(thresholds.find("portfolio,90,") != std::string::npos);
  CHECK(thresholds.find("portfolio,50,") != std::string::npos);
  CHECK(log.str().find("states%@90") != std::string::npos);

  CHECK(cmd_heatmap(config, o, log) == 0);
  const auto heat = json::parse(slurp(dir / "heatmap_ochiai.json"));
  CHECK(heat["cells"].size() == 7 * 7 * 4);
  CHECK(heat["directions"] == 4);
}

TEST_CASE("sweep refuses a ranking built for another abstraction") {
  const auto dir = scratch("mismatch");
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  CHECK(cmd_rank(parse_config(small_grid()), o, log) == 0);
  json other = small_grid();
  other["abstraction"] = {{"kind", "uniform_quantizer"}, {"bin_widths", {1, 1, 1, 1, 1}}};
  CHECK_THROWS_AS(cmd_sweep(parse_config(other), o, log), ConfigError);
}

TEST_CASE("a single-point r grid gives one row per measure") {
  const auto dir = scratch("onepoint");
  json j = small_grid();
  j["eval"]["r_grid"] = {1.0};
  const auto config = parse_config(j);
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  cmd_rank(config, o, log);
  cmd_sweep(config, o, log);
  const auto sweep = slurp(dir / "sweep.csv");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 1 + 7);
}

TEST_CASE("mu zero warns that every execution passes") {
  const auto dir = scratch("mu0");
  json j = small_grid();
  j["mutation"]["mu"] = 0.0;
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  CHECK(cmd_rank(parse_config(j), o, log) == 0);
  CHECK(log.str().find("warning") != std::string::npos);
  CHECK(log.str().find("all executions pass, SBFL scores are all 0") != std::string::npos);
}

TEST_CASE("agreement of a policy with itself") {
  const auto dir = scratch("agree");
  json j = small_grid();
  j["agree"] = {{"policy", {{"name", "scripted_grid"}}}};
  const auto config = parse_config(j);
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  cmd_rank(config, o, log);
  CHECK(cmd_agree(config, o, log) == 0);
  std::istringstream in(slurp(dir / "agreement.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "fraction,agreement_pct,states");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(csv_split(line)[1] == "100.0000");
    ++rows;
  }
  CHECK(rows == 10);
}

TEST_CASE("oracle-check passes on the chain config") {
  const auto dir = scratch("oracle");
  auto config = load_config(std::string(POLRANK_SOURCE_DIR) + "/configs/chain.json");
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  CHECK(cmd_oracle_check(config, o, log) == 0);
  CHECK(log.str().find("PASS") != std::string::npos);
  CHECK(slurp(dir / "oracle.csv").rfind("abstract_state,a_ep,a_ef,a_np,a_nf,pass_prob_clean", 0) == 0);
}

TEST_CASE("heatmap and oracle-check refuse unsupported environments") {
  const auto dir = scratch("unsupported");
  auto chain = load_config(std::string(POLRANK_SOURCE_DIR) + "/configs/chain.json");
  CommandOptions o;
  o.out_dir = dir.string();
  std::ostringstream log;
  cmd_rank(chain, o, log);
  CHECK_THROWS_AS(cmd_heatmap(chain, o, log), UnsupportedEnvironment);
  CHECK_THROWS_AS(run_oracle_check(parse_config(small_grid()), 1), UnsupportedEnvironment);
}

TEST_CASE("rank and sweep outputs are byte-identical across reruns and worker counts") {
  const auto config = parse_config(small_grid());
  std::vector<std::string> rankings, sweeps;
  for (int workers : {1, 8, 1}) {
    const auto dir = scratch("det" + std::to_string(rankings.size()));
    CommandOptions o;
    o.out_dir = dir.string();
    o.workers = workers;
    std::ostringstream log;
    cmd_rank(config, o, log);
    cmd_sweep(config, o, log);
    rankings.push_back(slurp(dir / "ranking.csv") + slurp(dir / "suite_meta.json"));
    sweeps.push_back(slurp(dir / "sweep.csv") + slurp(dir / "thresholds.csv"));
  }
  CHECK(rankings[0] == rankings[1]);
  CHECK(rankings[0] == rankings[2]);
  CHECK(sweeps[0] == sweeps[1]);
  CHECK(sweeps[0] == sweeps[2]);
}

TEST_CASE("exit codes: 0 success, 1 runtime failure, 2 config error") {
  const auto dir = scratch("exit");
  json good = small_grid();
  good["mutation"]["suite_size"] = 20;
  const auto cfg = write_config(dir, good).string();
  CHECK(run_cli("sweep --config " + cfg + " --out " + (dir / "empty").string()) == 1);
  CHECK(run_cli("rank --config " + cfg + " --out " + (dir / "ok").string() + " --workers 2 --seed 9") == 0);
  const auto meta = json::parse(slurp(dir / "ok" / "suite_meta.json"));
  CHECK(meta["config"]["master_seed"] == 9);
  CHECK(run_cli("rank --config " + cfg + " --out " + (dir / "ok").string() + " --set mutation.mu=7") == 2);
  json bad = good;
  bad["mutation"]["default_action"] = "noop";
  const auto bad_path = dir / "bad.json";
  std::ofstream(bad_path) << bad.dump();
  CHECK(run_cli("rank --config " + bad_path.string()) == 2);
  CHECK(run_cli("rank") != 0);
}
