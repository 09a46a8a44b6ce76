#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "polrank/abstraction.hpp"
#include "polrank/error.hpp"

using namespace polrank;

TEST_CASE("cartpole quantizer on a worked observation") {
  const CartPoleQuantizer q{{1, 1, 1, 1}, 4.0, true};
  const auto key = abstract(q, Observation::real({-0.23, 0.061, 0.08, -0.14}));
  CHECK(key.value == "0.2,0.1,0.0,0.1");
}

TEST_CASE("identity keys for discrete and real observations") {
  CHECK(abstract(IdentityAbstraction{}, Observation::discrete({3, 0, 2})).value == "3,0,2");
  CHECK(abstract(IdentityAbstraction{}, Observation::real({-0.0, 1.5})).value == "0,1.5");
}

TEST_CASE("negative zero never appears in keys") {
  const CartPoleQuantizer q{{1, 1, 1, 1}, 4.0, false};
  const auto key = abstract(q, Observation::real({-0.01, -0.0, -0.04, 0.0}));
  CHECK(key.value == "0.0,0.0,0.0,0.0");
  CHECK(format_fixed(-0.004, 2) == "0.00");
  CHECK(format_fixed(-0.006, 2) == "-0.01");
}

TEST_CASE("keys never use scientific notation") {
  CHECK(abstract(IdentityAbstraction{}, Observation::real({1e-7})).value.find('e') == std::string::npos);
  CHECK(abstract(IdentityAbstraction{}, Observation::real({3e20})).value.find('e') == std::string::npos);
}

TEST_CASE("uniform quantizer floors into bins") {
  const UniformQuantizer q{{0.5, 2.0}};
  CHECK(abstract(q, Observation::real({0.74, -0.1})).value == "1,-1");
  CHECK_THROWS_AS(abstract(q, Observation::real({1.0})), ConfigError);
}

TEST_CASE("abstraction properties over random observations") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const CartPoleQuantizer sym{{0, 1, 2, 1}, 4.0, true};
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> v{u(gen), u(gen), u(gen), u(gen)};
    std::vector<double> neg;
    for (double x : v) neg.push_back(-x);
    const auto obs = Observation::real(v);
    // idempotent canonicalization
    CHECK(abstract(sym, obs) == abstract(sym, obs));
    // sign symmetry under absolute values
    CHECK(abstract(sym, obs) == abstract(sym, Observation::real(neg)));
    CHECK_NOTHROW(abstract(UniformQuantizer{{0.1, 0.1, 0.1, 0.1}}, obs));
  }
}

TEST_CASE("abstraction specs round-trip through JSON and validate") {
  const AbstractionSpec specs[] = {IdentityAbstraction{}, CartPoleQuantizer{{0, 0, 1, 1}, 4.0, true},
                                   UniformQuantizer{{0.25, 1.0}}};
  for (const auto& s : specs) CHECK(abstraction_from_json(abstraction_to_json(s)) == s);
  CHECK_THROWS_AS(abstraction_from_json(nlohmann::json{{"kind", "cartpole_quantizer"}, {"decimals", 3}}),
                  ConfigError);
  CHECK_THROWS_AS(abstraction_from_json(nlohmann::json{{"kind", "pixels"}}), ConfigError);
  try {
    abstraction_from_json(nlohmann::json{{"kind", "uniform_quantizer"}, {"bin_widths", {0.0}}}, "abstraction");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("abstraction.bin_widths", 0) == 0);
  }
}
