#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <vector>

#include "polrank/abstraction.hpp"
#include "polrank/core.hpp"
#include "polrank/mutation.hpp"
#include "polrank/policies.hpp"

namespace polrank {

/// Exhaustive ground truth on small deterministic environments. Every
/// stochastic choice of a mutant execution (the mu-Bernoulli mutation
/// decision at each first visit and each memoized random default action) is
/// enumerated with its probability; no random numbers are drawn.
struct OracleSetup {
  const Environment* env = nullptr;  // prototype; cloned, never stepped
  Policy* policy = nullptr;          // must be deterministic
  DefaultActionKind default_action = DefaultActionKind::kRepeatPrevious;
  Condition condition = Condition::reward_at_least(0.0);
  AbstractionSpec abstraction = IdentityAbstraction{};
  int horizon = 0;  // 0 selects the environment default
  std::size_t max_states = 14;
  std::size_t max_leaves = 4'000'000;
};

struct ExactImportance {
  AbstractStateKey key;
  double pass_prob_clean = 0.0;
  double pass_prob_mutated_alone = 0.0;
  double drop = 0.0;
};

// Per-episode expectations of the four counters.
struct ExpectedCounters {
  double ep = 0.0;
  double ef = 0.0;
  double np = 0.0;
  double nf = 0.0;
  double visit_probability() const { return ep + ef + np + nf; }
};

/// Exact probability that the condition holds when the states in
/// `mutant_set` take the default action. Throws UnsupportedEnvironment for
/// non-deterministic environments and OracleBoundExceeded past the bounds.
double exact_pass_probability(const OracleSetup& setup, const std::set<AbstractStateKey>& mutant_set);

// Every abstract state visited on some branch of some mutant execution.
std::set<AbstractStateKey> reachable_states(const OracleSetup& setup);

/// Single-state mutation drops for every reachable state, sorted by drop
/// descending with ties broken by ascending key.
std::vector<ExactImportance> exact_single_state_importance(const OracleSetup& setup);

/// Expected spectrum counters per episode under mutation rate mu.
std::map<AbstractStateKey, ExpectedCounters> exact_expected_counters(const OracleSetup& setup, double mu);

/// Oracle CSV: the ranking CSV's leading columns with expected counters,
/// followed by pass_prob_clean, pass_prob_mutated and drop.
void write_oracle_csv(std::ostream& out, const std::map<AbstractStateKey, ExpectedCounters>& expected,
                      const std::vector<ExactImportance>& importance);

}  // namespace polrank
