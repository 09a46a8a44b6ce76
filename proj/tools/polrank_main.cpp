// polrank: rank environment states by the importance of a policy's decisions.
//
//   polrank rank    --config configs/grid.json --out out/grid
//   polrank sweep   --config configs/grid.json --out out/grid
//   polrank report  --config configs/grid.json --out out/grid --workers 4
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "app/commands.hpp"
#include "app/config.hpp"
#include "polrank/error.hpp"

namespace {

struct Shared {
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_shared(CLI::App* cmd, Shared& s) {
  cmd->add_option("--config", s.config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", s.out_dir, "Output directory (default: the config's output_dir)");
  cmd->add_option("--workers", s.workers, "Parallel episode workers")->check(CLI::Range(1, 256));
  cmd->add_option("--seed", s.seed, "Override mutation.master_seed");
  cmd->add_option("--set", s.overrides, "Override a config leaf, e.g. --set mutation.mu=0.3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank states by the importance of a policy's decisions"};
  app.require_subcommand(1);

  Shared shared;
  polrank::app::CommandOptions options;

  auto* rank = app.add_subcommand("rank", "Generate a mutant suite and write ranking.csv for all measures");
  add_shared(rank, shared);
  rank->add_flag("--write-suite", options.write_suite, "Also write suite.jsonl");

  auto* sweep = app.add_subcommand("sweep", "Evaluate pruned policies over the r grid");
  add_shared(sweep, shared);
  sweep->add_option("--ranking", options.ranking_path, "Ranking CSV (default: <out>/ranking.csv)");

  auto* report = app.add_subcommand("report", "Repeat rank and sweep, report mean and spread of thresholds");
  add_shared(report, shared);

  auto* heatmap = app.add_subcommand("heatmap", "Export grid scores per (x, y, direction)");
  add_shared(heatmap, shared);
  heatmap->add_option("--ranking", options.ranking_path, "Ranking CSV (default: <out>/ranking.csv)");
  heatmap->add_option("--measure", options.measure, "Measure label")->capture_default_str();

  auto* agree = app.add_subcommand("agree", "Agreement of two policies over the top ranked states");
  add_shared(agree, shared);
  agree->add_option("--ranking", options.ranking_path, "Ranking CSV (default: <out>/ranking.csv)");

  auto* oracle = app.add_subcommand("oracle-check", "Compare suite counters with exact expectations");
  add_shared(oracle, shared);

  CLI11_PARSE(app, argc, argv);

  try {
    if (shared.seed) shared.overrides.push_back("mutation.master_seed=" + std::to_string(*shared.seed));
    const auto config = polrank::app::load_config(shared.config_path, shared.overrides);
    options.out_dir = shared.out_dir;
    options.workers = shared.workers;

    if (rank->parsed()) return polrank::app::cmd_rank(config, options, std::cout);
    if (sweep->parsed()) return polrank::app::cmd_sweep(config, options, std::cout);
    if (report->parsed()) return polrank::app::cmd_report(config, options, std::cout);
    if (heatmap->parsed()) return polrank::app::cmd_heatmap(config, options, std::cout);
    if (agree->parsed()) return polrank::app::cmd_agree(config, options, std::cout);
    if (oracle->parsed()) return polrank::app::cmd_oracle_check(config, options, std::cout);
  } catch (const polrank::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
