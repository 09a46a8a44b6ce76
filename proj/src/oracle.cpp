#include "polrank/oracle.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <ostream>

#include "polrank/error.hpp"
#include "polrank/spectrum.hpp"

namespace polrank {

namespace {

// One root-to-leaf path of the enumeration.
struct Leaf {
  double probability = 0.0;
  bool passed = false;
  const std::map<AbstractStateKey, bool>* visits = nullptr;
};

struct Node {
  std::unique_ptr<Environment> env;
  Observation obs;
  EpisodeMutationMemo memo;
  std::vector<ActionId> history;
  std::map<AbstractStateKey, bool> visits;
  double reward = 0.0;
  double probability = 1.0;
  int step = 0;
};

Node copy_node(const Node& n) {
  return Node{n.env->clone(), n.obs, n.memo, n.history, n.visits, n.reward, n.probability, n.step};
}

class Enumerator {
 public:
  // With `mutant_set` the mutation decision of each state is fixed; without it
  // every first visit branches on mu.
  Enumerator(const OracleSetup& setup, std::optional<std::set<AbstractStateKey>> mutant_set, double mu,
             std::function<void(const Leaf&)> on_leaf)
      : setup_(setup), mutant_set_(std::move(mutant_set)), mu_(mu), on_leaf_(std::move(on_leaf)) {
    if (setup.env == nullptr || setup.policy == nullptr) throw ContractViolation("oracle: env and policy are required");
    if (!setup.env->deterministic()) {
      throw UnsupportedEnvironment("oracle: environment '" + setup.env->name() + "' is not deterministic");
    }
    if (setup.policy->action_count() != setup.env->action_count()) {
      throw ContractViolation("oracle: policy and environment disagree on the action count");
    }
    horizon_ = setup.horizon > 0 ? setup.horizon : setup.env->default_horizon();
  }

  void run() {
    Node root;
    root.env = setup_.env->clone();
    root.obs = root.env->reset(0);
    setup_.policy->begin_episode(0);
    expand(std::move(root));
  }

 private:
  void leaf(const Node& n) {
    if (++leaves_ > setup_.max_leaves) {
      throw OracleBoundExceeded("oracle: more than " + std::to_string(setup_.max_leaves) + " execution branches");
    }
    ExecutionTrace t;
    t.total_reward = n.reward;
    on_leaf_(Leaf{n.probability, setup_.condition.holds(t), &n.visits});
  }

  void note_key(const AbstractStateKey& key) {
    if (seen_.insert(key).second && seen_.size() > setup_.max_states) {
      throw OracleBoundExceeded("oracle: more than " + std::to_string(setup_.max_states) + " abstract states");
    }
  }

  void expand(Node n) {
    if (n.step >= horizon_) return leaf(n);
    AbstractStateKey key = abstract(setup_.abstraction, n.obs);
    note_key(key);

    auto it = n.memo.decided.find(key);
    if (it != n.memo.decided.end()) return act(std::move(n), key, it->second);
    if (mutant_set_) {
      const bool mutated = mutant_set_->contains(key);
      n.memo.decided.emplace(key, mutated);
      return act(std::move(n), key, mutated);
    }
    const double p_mut = mu_;
    if (p_mut < 1.0) {
      Node keep = p_mut > 0.0 ? copy_node(n) : std::move(n);
      keep.probability *= 1.0 - p_mut;
      keep.memo.decided.emplace(key, false);
      act(std::move(keep), key, false);
    }
    if (p_mut > 0.0) {
      n.probability *= p_mut;
      n.memo.decided.emplace(key, true);
      act(std::move(n), key, true);
    }
  }

  void act(Node n, const AbstractStateKey& key, bool mutated) {
    if (!mutated) {
      const ActionId a = setup_.policy->act(n.obs);
      return transition(std::move(n), key, false, a);
    }
    if (setup_.default_action == DefaultActionKind::kRepeatPrevious) {
      const ActionId a = n.history.empty() ? setup_.policy->act(n.obs) : n.history.back();
      return transition(std::move(n), key, true, a);
    }
    auto s = n.memo.sampled_actions.find(key);
    if (s != n.memo.sampled_actions.end()) {
      const ActionId a = s->second;
      return transition(std::move(n), key, true, a);
    }
    const int k = setup_.env->action_count();
    for (int a = 0; a < k; ++a) {
      Node b = copy_node(n);
      b.probability /= k;
      b.memo.sampled_actions.emplace(key, a);
      transition(std::move(b), key, true, a);
    }
  }

  void transition(Node n, const AbstractStateKey& key, bool mutated, ActionId action) {
    if (action < 0 || action >= setup_.env->action_count()) {
      throw ContractViolation("oracle: action " + std::to_string(action) + " out of range");
    }
    n.visits.emplace(key, mutated);
    StepOutcome out = n.env->step(action);
    n.history.push_back(action);
    n.reward += out.reward;
    n.obs = std::move(out.observation);
    ++n.step;
    if (out.terminal) return leaf(n);
    expand(std::move(n));
  }

  const OracleSetup& setup_;
  std::optional<std::set<AbstractStateKey>> mutant_set_;
  double mu_ = 0.0;
  std::function<void(const Leaf&)> on_leaf_;
  int horizon_ = 0;
  std::size_t leaves_ = 0;
  std::set<AbstractStateKey> seen_;
};

}  // namespace

double exact_pass_probability(const OracleSetup& setup, const std::set<AbstractStateKey>& mutant_set) {
  double p = 0.0;
  Enumerator(setup, mutant_set, 0.0, [&](const Leaf& l) {
    if (l.passed) p += l.probability;
  }).run();
  return p;
}

std::set<AbstractStateKey> reachable_states(const OracleSetup& setup) {
  std::set<AbstractStateKey> keys;
  Enumerator(setup, std::nullopt, 0.5, [&](const Leaf& l) {
    for (const auto& [key, mutated] : *l.visits) keys.insert(key);
  }).run();
  return keys;
}

std::vector<ExactImportance> exact_single_state_importance(const OracleSetup& setup) {
  const double clean = exact_pass_probability(setup, {});
  std::vector<ExactImportance> out;
  for (const auto& key : reachable_states(setup)) {
    const double mutated = exact_pass_probability(setup, {key});
    out.push_back(ExactImportance{key, clean, mutated, clean - mutated});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ExactImportance& a, const ExactImportance& b) { return a.drop > b.drop; });
  return out;
}

std::map<AbstractStateKey, ExpectedCounters> exact_expected_counters(const OracleSetup& setup, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("oracle: mu must lie in [0, 1]");
  std::map<AbstractStateKey, ExpectedCounters> expected;
  Enumerator(setup, std::nullopt, mu, [&](const Leaf& l) {
    for (const auto& [key, mutated] : *l.visits) {
      auto& c = expected[key];
      (mutated ? (l.passed ? c.np : c.nf) : (l.passed ? c.ep : c.ef)) += l.probability;
    }
  }).run();
  return expected;
}

void write_oracle_csv(std::ostream& out, const std::map<AbstractStateKey, ExpectedCounters>& expected,
                      const std::vector<ExactImportance>& importance) {
  std::map<AbstractStateKey, const ExactImportance*> by_key;
  for (const auto& e : importance) by_key[e.key] = &e;
  std::set<AbstractStateKey> keys;
  for (const auto& [k, c] : expected) keys.insert(k);
  for (const auto& [k, e] : by_key) keys.insert(k);

  out << "abstract_state,a_ep,a_ef,a_np,a_nf,pass_prob_clean,pass_prob_mutated,drop\n";
  for (const auto& key : keys) {
    auto c_it = expected.find(key);
    const ExpectedCounters c = c_it == expected.end() ? ExpectedCounters{} : c_it->second;
    out << csv_escape(key.value) << ',' << format_fixed(c.ep, 6) << ',' << format_fixed(c.ef, 6) << ','
        << format_fixed(c.np, 6) << ',' << format_fixed(c.nf, 6);
    auto i_it = by_key.find(key);
    if (i_it == by_key.end()) {
      out << ",,,\n";
    } else {
      const auto& e = *i_it->second;
      out << ',' << format_fixed(e.pass_prob_clean, 6) << ',' << format_fixed(e.pass_prob_mutated_alone, 6) << ','
          << format_fixed(e.drop, 6) << '\n';
    }
  }
}

}  // namespace polrank
