#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "app/config.hpp"
#include "polrank/mutation.hpp"
#include "polrank/oracle.hpp"
#include "polrank/pruning.hpp"
#include "polrank/spectrum.hpp"

namespace polrank::app {

struct CommandOptions {
  std::string out_dir;  // empty: the config's output_dir
  int workers = 1;
  bool write_suite = false;
  std::string ranking_path;   // empty: <out>/ranking.csv
  std::string metadata_path;  // empty: <out>/suite_meta.json
  std::string measure = "ochiai";
};

std::uint64_t rand_measure_seed(const RunConfig& config);

struct RankResult {
  TestSuite suite;
  CounterMap counters;
  std::vector<Ranking> rankings;  // all six measures
  BalanceReport balance;
};

RankResult run_rank(const RunConfig& config, int workers);

struct ThresholdRow {
  std::string measure;
  double threshold_pct = 0.0;
  ThresholdSummary summary;
};

struct SweepOutcome {
  std::vector<SweepResult> sweeps;  // one per ranking, then "portfolio"
  std::vector<ThresholdRow> thresholds;
  double original_mean = 0.0;
  double random_mean = 0.0;
};

SweepOutcome run_sweep(const RunConfig& config, const std::vector<Ranking>& rankings, int workers);

void print_threshold_table(std::ostream& out, const std::vector<ThresholdRow>& rows);
void write_threshold_csv(std::ostream& out, const std::vector<ThresholdRow>& rows);

struct OracleCheckRow {
  double mu = 0.0;
  AbstractStateKey key;
  std::string counter;  // ep, ef, np or nf
  double expected = 0.0;
  std::uint64_t observed = 0;
  double z = 0.0;
  bool ok = true;
};

struct OracleCheckResult {
  std::vector<OracleCheckRow> rows;
  std::vector<std::string> problems;
  bool passed() const { return problems.empty(); }
};

/// Compares empirical counters of an `episodes`-long suite against the exact
/// expectations for each mu: |observed - N p| <= sigmas * sqrt(N p (1 - p)).
OracleCheckResult run_oracle_check(const RunConfig& config, int workers);

// Subcommands. Each returns the process exit code; errors propagate as
// exceptions and are mapped to exit codes by the caller.
int cmd_rank(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_sweep(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_report(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_heatmap(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_agree(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_oracle_check(const RunConfig& config, const CommandOptions& options, std::ostream& log);

}  // namespace polrank::app
