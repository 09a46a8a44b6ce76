#include "polrank/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "polrank/abstraction.hpp"
#include "polrank/error.hpp"
#include "polrank/rng.hpp"

namespace polrank {

CounterMap accumulate(std::span<const ExecutionTrace> traces) {
  CounterMap counters;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    if (!t.passed) throw ContractViolation("accumulate: trace " + std::to_string(i) + " has no pass/fail label");
    const bool pass = *t.passed;
    for (const auto& [key, mutated] : t.abstract_visits) {
      auto& c = counters[key];
      if (!mutated) {
        ++(pass ? c.ep : c.ef);
      } else {
        ++(pass ? c.np : c.nf);
      }
    }
  }
  return counters;
}

CounterMap accumulate(const TestSuite& suite) { return accumulate(std::span<const ExecutionTrace>(suite.traces)); }

void merge_into(CounterMap& target, const CounterMap& other) {
  for (const auto& [key, c] : other) target[key] += c;
}

std::string Measure::label() const {
  switch (kind) {
    case MeasureKind::kOchiai:
      return "ochiai";
    case MeasureKind::kTarantula:
      return "tarantula";
    case MeasureKind::kZoltar:
      return "zoltar";
    case MeasureKind::kWongII:
      return "wong2";
    case MeasureKind::kFreqVis:
      return "freqvis";
    case MeasureKind::kRand:
      return "rand";
  }
  return "?";
}

Measure measure_from_label(const std::string& label, std::uint64_t rand_seed) {
  for (const auto& m : all_measures(rand_seed)) {
    if (m.label() == label) return m;
  }
  throw ConfigError("unknown measure '" + label + "'");
}

std::vector<Measure> sbfl_measures() {
  return {Measure::ochiai(), Measure::tarantula(), Measure::zoltar(), Measure::wong2()};
}

std::vector<Measure> all_measures(std::uint64_t rand_seed) {
  auto ms = sbfl_measures();
  ms.push_back(Measure::freq_vis());
  ms.push_back(Measure::rand(rand_seed));
  return ms;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

double score(const Measure& measure, const SpectrumCounters& c, const AbstractStateKey& key) {
  const auto ep = static_cast<double>(c.ep);
  const auto ef = static_cast<double>(c.ef);
  const auto np = static_cast<double>(c.np);
  const auto nf = static_cast<double>(c.nf);
  switch (measure.kind) {
    case MeasureKind::kOchiai:
      if (c.ef == 0) return 0.0;
      return ef / std::sqrt((ef + nf) * (ef + ep));
    case MeasureKind::kTarantula: {
      if (c.ef == 0) return 0.0;
      const double fail_ratio = ratio(ef, ef + nf);
      const double pass_ratio = ratio(ep, ep + np);
      return ratio(fail_ratio, fail_ratio + pass_ratio);
    }
    case MeasureKind::kZoltar:
      if (c.ef == 0) return 0.0;
      return ef / (ef + nf + ep + 10000.0 * nf * ep / ef);
    case MeasureKind::kWongII:
      return ef - ep;
    case MeasureKind::kFreqVis:
      return static_cast<double>(c.visits());
    case MeasureKind::kRand: {
      const std::uint64_t h = splitmix64(measure.seed ^ fnv1a64(key.value));
      return static_cast<double>(h >> 11) * 0x1.0p-53;
    }
  }
  return 0.0;
}

std::string to_string(ExecutedRole role) { return role == ExecutedRole::kMutated ? "mutated" : "unmutated"; }

ExecutedRole executed_role_from_string(const std::string& s) {
  if (s == "mutated") return ExecutedRole::kMutated;
  if (s == "unmutated") return ExecutedRole::kUnmutated;
  throw ConfigError("unknown executed role '" + s + "' (expected mutated or unmutated)");
}

SpectrumCounters scoring_view(const SpectrumCounters& c, ExecutedRole role) {
  if (role == ExecutedRole::kUnmutated) return c;
  return SpectrumCounters{c.np, c.nf, c.ep, c.ef};
}

std::set<AbstractStateKey> Ranking::top(std::size_t n) const {
  std::set<AbstractStateKey> keys;
  for (std::size_t i = 0; i < std::min(n, entries.size()); ++i) keys.insert(entries[i].key);
  return keys;
}

Ranking rank(const CounterMap& counters, const Measure& measure, const std::set<AbstractStateKey>& all_keys,
             ExecutedRole role) {
  Ranking r;
  r.measure = measure;
  r.entries.reserve(all_keys.size());
  for (const auto& key : all_keys) {
    auto it = counters.find(key);
    const double s = it == counters.end() ? kUnvisitedScore : score(measure, scoring_view(it->second, role), key);
    r.entries.push_back(RankedState{key, s, 0});
  }
  // all_keys is sorted, so a stable sort by score keeps ascending keys on ties.
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const RankedState& a, const RankedState& b) { return a.score > b.score; });
  for (std::size_t i = 0; i < r.entries.size(); ++i) r.entries[i].rank = i + 1;
  return r;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

std::string format_score(double s) {
  if (std::isinf(s)) return s < 0 ? "-inf" : "inf";
  return format_fixed(s, 6);
}

}  // namespace

void write_ranking_csv(std::ostream& out, const CounterMap& counters, std::span<const Ranking> rankings) {
  out << "abstract_state,a_ep,a_ef,a_np,a_nf";
  for (const auto& r : rankings) out << ',' << r.measure.label() << "_score," << r.measure.label() << "_rank";
  out << '\n';
  if (rankings.empty()) return;

  // Rows follow the first ranking's key set in ascending key order.
  std::vector<std::map<AbstractStateKey, const RankedState*>> index(rankings.size());
  for (std::size_t m = 0; m < rankings.size(); ++m) {
    for (const auto& e : rankings[m].entries) index[m][e.key] = &e;
  }
  for (const auto& [key, first] : index[0]) {
    auto it = counters.find(key);
    const SpectrumCounters c = it == counters.end() ? SpectrumCounters{} : it->second;
    out << csv_escape(key.value) << ',' << c.ep << ',' << c.ef << ',' << c.np << ',' << c.nf;
    for (std::size_t m = 0; m < rankings.size(); ++m) {
      auto e = index[m].find(key);
      if (e == index[m].end()) throw ContractViolation("rankings cover different key sets");
      out << ',' << format_score(e->second->score) << ',' << e->second->rank;
    }
    out << '\n';
  }
}

RankingTable read_ranking_csv(std::istream& in, std::uint64_t rand_seed) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("ranking CSV is empty");
  const auto header = csv_split(line);
  if (header.size() < 5 || header[0] != "abstract_state" || header[1] != "a_ep") {
    throw ConfigError("ranking CSV: unexpected header");
  }
  RankingTable table;
  std::vector<std::size_t> score_cols;
  for (std::size_t col = 5; col + 1 < header.size(); col += 2) {
    const std::string& h = header[col];
    const auto suffix = h.rfind("_score");
    if (suffix == std::string::npos) throw ConfigError("ranking CSV: bad column " + h);
    table.rankings.push_back(Ranking{measure_from_label(h.substr(0, suffix), rand_seed), {}});
    score_cols.push_back(col);
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_split(line);
    if (f.size() != header.size()) throw ConfigError("ranking CSV line " + std::to_string(line_no) + ": wrong field count");
    AbstractStateKey key(f[0]);
    try {
      table.counters[key] = SpectrumCounters{std::stoull(f[1]), std::stoull(f[2]), std::stoull(f[3]), std::stoull(f[4])};
      for (std::size_t m = 0; m < score_cols.size(); ++m) {
        const std::string& s = f[score_cols[m]];
        const double sc = s == "-inf" ? kUnvisitedScore : std::stod(s);
        table.rankings[m].entries.push_back(RankedState{key, sc, std::stoull(f[score_cols[m] + 1])});
      }
    } catch (const std::logic_error&) {
      throw ConfigError("ranking CSV line " + std::to_string(line_no) + ": malformed number");
    }
  }
  for (auto& r : table.rankings) {
    std::sort(r.entries.begin(), r.entries.end(),
              [](const RankedState& a, const RankedState& b) { return a.rank < b.rank; });
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
      if (r.entries[i].rank != i + 1) throw ConfigError("ranking CSV: ranks of " + r.measure.label() + " are not 1..N");
    }
  }
  return table;
}

}  // namespace polrank
