#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "polrank/core.hpp"
#include "polrank/mutation.hpp"

namespace polrank {

/// Per-state spectrum: executions that visited the state with it unmutated
/// (e) or mutated (n), split by passing (p) and failing (f) verdicts.
struct SpectrumCounters {
  std::uint64_t ep = 0;
  std::uint64_t ef = 0;
  std::uint64_t np = 0;
  std::uint64_t nf = 0;

  std::uint64_t visits() const { return ep + ef + np + nf; }
  SpectrumCounters& operator+=(const SpectrumCounters& o) {
    ep += o.ep;
    ef += o.ef;
    np += o.np;
    nf += o.nf;
    return *this;
  }
  bool operator==(const SpectrumCounters&) const = default;
};

using CounterMap = std::map<AbstractStateKey, SpectrumCounters>;

// Each trace contributes at most one increment per visited state. Throws
// ContractViolation on a trace without a pass/fail label.
CounterMap accumulate(std::span<const ExecutionTrace> traces);
CounterMap accumulate(const TestSuite& suite);
// Componentwise sum; commutative and associative.
void merge_into(CounterMap& target, const CounterMap& other);

enum class MeasureKind { kOchiai, kTarantula, kZoltar, kWongII, kFreqVis, kRand };

struct Measure {
  MeasureKind kind = MeasureKind::kOchiai;
  std::uint64_t seed = 0;  // used by Rand only

  static Measure ochiai() { return {MeasureKind::kOchiai, 0}; }
  static Measure tarantula() { return {MeasureKind::kTarantula, 0}; }
  static Measure zoltar() { return {MeasureKind::kZoltar, 0}; }
  static Measure wong2() { return {MeasureKind::kWongII, 0}; }
  static Measure freq_vis() { return {MeasureKind::kFreqVis, 0}; }
  static Measure rand(std::uint64_t seed) { return {MeasureKind::kRand, seed}; }

  bool is_sbfl() const { return kind <= MeasureKind::kWongII; }
  std::string label() const;
  bool operator==(const Measure&) const = default;
};

Measure measure_from_label(const std::string& label, std::uint64_t rand_seed);
// Ochiai, Tarantula, Zoltar, Wong-II.
std::vector<Measure> sbfl_measures();
// The four SBFL measures followed by FreqVis and Rand(rand_seed).
std::vector<Measure> all_measures(std::uint64_t rand_seed);

/// Suspiciousness of one state. Ratios with a zero denominator count as 0,
/// and Ochiai, Tarantula and Zoltar are 0 whenever a_ef = 0. Rand ignores the
/// counters and hashes (seed, key) to a value in [0, 1).
double score(const Measure& measure, const SpectrumCounters& c, const AbstractStateKey& key = {});

/// Which visits play the "executed" role when a measure is evaluated. The
/// stored counters always use e = unmutated; kMutated scores the swapped view
/// <np, nf, ep, ef>, so that a state scores high when taking the default
/// action there goes together with failing.
enum class ExecutedRole { kUnmutated, kMutated };

std::string to_string(ExecutedRole role);
ExecutedRole executed_role_from_string(const std::string& s);

// The counters as seen by the measures under `role`.
SpectrumCounters scoring_view(const SpectrumCounters& c, ExecutedRole role);

inline constexpr double kUnvisitedScore = -std::numeric_limits<double>::infinity();

struct RankedState {
  AbstractStateKey key;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct Ranking {
  Measure measure;
  std::vector<RankedState> entries;

  std::size_t size() const { return entries.size(); }
  // Keys of the first n entries.
  std::set<AbstractStateKey> top(std::size_t n) const;
};

/// Orders all_keys by descending score, ties broken by ascending key. Keys
/// without counters get kUnvisitedScore.
Ranking rank(const CounterMap& counters, const Measure& measure, const std::set<AbstractStateKey>& all_keys,
             ExecutedRole role = ExecutedRole::kMutated);

/// Ranking CSV: abstract_state, a_ep, a_ef, a_np, a_nf, then <label>_score
/// and <label>_rank per measure. Scores use 6 decimals.
void write_ranking_csv(std::ostream& out, const CounterMap& counters, std::span<const Ranking> rankings);

struct RankingTable {
  CounterMap counters;
  std::vector<Ranking> rankings;
};

// Rebuilds the rankings from their rank columns.
RankingTable read_ranking_csv(std::istream& in, std::uint64_t rand_seed = 0);

// Minimal CSV helpers shared by the report writers.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);

}  // namespace polrank
