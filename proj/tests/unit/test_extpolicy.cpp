#include <chrono>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "polrank/environments.hpp"
#include "polrank/error.hpp"
#include "polrank/extpolicy.hpp"
#include "polrank/mutation.hpp"

using namespace polrank;

namespace {

std::unique_ptr<ProtocolHandle> fixture(const std::string& mode, const std::string& arg = "0", int handshake = 5000) {
  return ProtocolHandle::spawn({POLRANK_FIXTURE_CLIENT, mode, arg}, handshake);
}

ProtocolError expect_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ProtocolError& e) {
    return e;
  }
  FAIL("expected a protocol error");
  return ProtocolError(ProtocolErrorKind::kMalformed, "");
}

}  // namespace

TEST_CASE("wire messages are exact") {
  CHECK(hello_message() == R"({"type":"hello"})");
  CHECK(reset_message(42) == R"({"type":"reset","seed":42})");
  CHECK(act_message(Observation::discrete({1, 2, 3})) == R"({"type":"act","obs":[1,2,3]})");
  CHECK(act_message(Observation::real({0.5, -0.25})) == R"({"type":"act","obs":[0.5,-0.25]})");
  CHECK(shutdown_message() == R"({"type":"shutdown"})");
  for (const auto& m : {hello_message(), reset_message(1), act_message(Observation::real({1e-300, 3.0}))}) {
    CHECK(m.find('\n') == std::string::npos);
    CHECK(nlohmann::json::parse(m).is_object());
  }
}

TEST_CASE("handshake happy path and constant replies") {
  auto h = fixture("echo", "2");
  CHECK(h->action_count() == 3);
  h->reset(7);
  for (int i = 0; i < 20; ++i) CHECK(h->act(Observation::discrete({i})) == 2);
  h->shutdown();
  CHECK(h->stderr_text().find(R"({"type":"hello"})") != std::string::npos);
  CHECK(h->stderr_text().find(R"({"type":"reset","seed":7})") != std::string::npos);
}

TEST_CASE("the sign client announces two actions") {
  auto h = fixture("sign", "0.5");
  CHECK(h->action_count() == 2);
  CHECK(h->act(Observation::real({0.0, 0.0, 0.01, 0.0})) == 1);
}

TEST_CASE("1000 sequential requests are answered in order") {
  auto h = fixture("sign", "0");
  for (int i = 0; i < 1000; ++i) {
    const double angle = (i % 2 == 0) ? 0.1 : -0.1;
    CHECK(h->act(Observation::real({0.0, 0.0, angle, 0.0})) == (i % 2 == 0 ? 1 : 0));
  }
}

TEST_CASE("handshake failures are spawn failures with the child's stderr") {
  auto bad = expect_error([] { fixture("bad-handshake"); });
  CHECK(bad.kind() == ProtocolErrorKind::kSpawnFailed);
  CHECK(std::string(bad.what()).find("hello there") != std::string::npos);

  auto zero = expect_error([] { fixture("zero-actions"); });
  CHECK(zero.kind() == ProtocolErrorKind::kSpawnFailed);

  auto gone = expect_error([] { fixture("exit"); });
  CHECK(gone.kind() == ProtocolErrorKind::kSpawnFailed);
  CHECK(std::string(gone.what()).find("3") != std::string::npos);
  CHECK(std::string(gone.what()).find("exiting early") != std::string::npos);

  auto missing = expect_error([] { ProtocolHandle::spawn({"/nonexistent/polrank-client"}); });
  CHECK(missing.kind() == ProtocolErrorKind::kSpawnFailed);
}

TEST_CASE("out-of-range ids are reported with the raw reply and keep the handle usable") {
  auto h = fixture("out-of-range");
  auto e = expect_error([&] { h->act(Observation::discrete({0})); });
  CHECK(e.kind() == ProtocolErrorKind::kOutOfRange);
  CHECK(e.raw_reply() == R"({"type":"action","id":5})");
  CHECK(expect_error([&] { h->act(Observation::discrete({0})); }).kind() == ProtocolErrorKind::kOutOfRange);
}

TEST_CASE("malformed replies carry the raw line") {
  auto h = fixture("malformed");
  auto e = expect_error([&] { h->act(Observation::discrete({0})); });
  CHECK(e.kind() == ProtocolErrorKind::kMalformed);
  CHECK(e.raw_reply() == "not json at all");
}

TEST_CASE("remote errors are surfaced") {
  auto h = fixture("error");
  auto e = expect_error([&] { h->act(Observation::discrete({0})); });
  CHECK(e.kind() == ProtocolErrorKind::kRemoteError);
  CHECK(std::string(e.what()).find("policy crashed") != std::string::npos);
}

TEST_CASE("a silent child times out and the handle is then refused") {
  auto h = fixture("slow");
  const auto t0 = std::chrono::steady_clock::now();
  auto e = expect_error([&] { h->act(Observation::discrete({0}), 200); });
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(e.kind() == ProtocolErrorKind::kTimeout);
  CHECK(ms < 5000);
  CHECK_THROWS_AS(h->act(Observation::discrete({0})), ProtocolError);
}

TEST_CASE("child death during a request") {
  auto h = fixture("die-on-act");
  auto e = expect_error([&] { h->act(Observation::discrete({0})); });
  CHECK(e.kind() == ProtocolErrorKind::kChildExited);
}

TEST_CASE("external policy prefixes the step and maps out-of-range to a contract violation") {
  ExternalPolicy p(fixture("out-of-range"));
  p.begin_episode(0);
  try {
    p.act(Observation::discrete({0}));
    FAIL("expected a contract violation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).rfind("step 0: ", 0) == 0);
  }
  CHECK_FALSE(p.shareable());
}

TEST_CASE("the sign rule behind the protocol gives the same traces as the in-process policy") {
  auto local = scripted_cartpole_policy(0.5);
  auto remote = external_policy(fixture("sign", "0.5"));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CartPoleEnv a({}), b({});
    PolicyController ca(*local), cb(*remote);
    CHECK(run_episode(a, ca, seed, 200) == run_episode(b, cb, seed, 200));
  }
}

TEST_CASE("suites through the protocol match in-process suites") {
  MutationConfig c;
  c.suite_size = 30;
  c.mu = 0.4;
  c.condition = Condition::reward_at_least(200);
  c.abstraction = CartPoleQuantizer{};
  c.master_seed = 2;
  const auto make = [] { return cartpole_env({}); };
  const auto a = generate_test_suite(make, scripted_cartpole_policy(0.5), c, 0, 4);
  const auto b = generate_test_suite(make, external_policy(fixture("sign", "0.5")), c, 0, 4);
  CHECK(a.traces == b.traces);
}
