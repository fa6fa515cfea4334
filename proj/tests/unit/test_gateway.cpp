#include <gtest/gtest.h>

#include <thread>

#include "autoevol/concurrency.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/gateway.hpp"
#include "autoevol/mock_backend.hpp"
#include "test_support.hpp"

using namespace autoevol;
using namespace autoevol::testing;
using nlohmann::json;

namespace {

GatewayOptions fast() {
  GatewayOptions o;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  o.retry.max_backoff = std::chrono::milliseconds(4);
  return o;
}

GenerationRequest req(const std::string& prompt, RoleTag role = RoleTag::Evol) {
  GenerationRequest r;
  r.user_prompt = prompt;
  r.role_tag = role;
  return r;
}

}  // namespace

TEST(Gateway, ScriptedOk) {
  Gateway g(MockBackend::constant("OK"), fast());
  EXPECT_EQ(g.generate(req("anything"), "p"), "OK");
  const auto l = g.ledger();
  EXPECT_EQ(l.calls_by_role.at("evol"), 1u);
  EXPECT_EQ(l.calls_by_phase.at("p"), 1u);
  EXPECT_EQ(l.total_calls(), 1u);
}

TEST(Gateway, TwoTransientThenSuccess) {
  auto mock = MockBackend::from_json(json::parse(R"({"rules":[{"responses":[
      {"error":"transient"},{"error":"transient"},"fine"]}]})"));
  Gateway g(mock, fast());
  EXPECT_EQ(g.generate(req("x"), "p"), "fine");
  const auto l = g.ledger();
  EXPECT_EQ(l.retries, 2u);
  EXPECT_EQ(l.failures, 0u);
  EXPECT_EQ(l.total_calls(), 1u);
}

TEST(Gateway, ExhaustedRetriesIsTransportError) {
  auto mock = MockBackend::from_json(
      json::parse(R"({"rules":[{"responses":[{"error":"transient","repeat":10}]}]})"));
  Gateway g(mock, fast());
  EXPECT_THROW(g.generate(req("x"), "p"), TransportError);
  const auto l = g.ledger();
  EXPECT_EQ(l.retries, 3u);
  EXPECT_EQ(l.failures, 1u);
  EXPECT_EQ(l.calls_by_phase.at("p"), 1u);
  EXPECT_EQ(mock->requests().size(), 4u);
}

TEST(Gateway, ApiErrorIsImmediate) {
  auto mock = MockBackend::from_json(
      json::parse(R"({"rules":[{"responses":[{"error":"api","message":"bad key"}]}]})"));
  Gateway g(mock, fast());
  try {
    g.generate(req("x"), "p");
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_NE(std::string(e.what()).find("bad key"), std::string::npos);
  }
  EXPECT_EQ(g.ledger().retries, 0u);
  EXPECT_EQ(mock->requests().size(), 1u);
}

TEST(Gateway, RequestValidation) {
  Gateway g(MockBackend::constant("OK"), fast());
  EXPECT_THROW(g.generate(req(""), "p"), ValidationError);
  auto r = req("x");
  r.temperature = 2.5;
  EXPECT_THROW(g.generate(r, "p"), ValidationError);
  r = req("x");
  r.top_p = 0.0;
  EXPECT_THROW(g.generate(r, "p"), ValidationError);
  r = req("x");
  r.max_tokens = 0;
  EXPECT_THROW(g.generate(r, "p"), ValidationError);
  EXPECT_EQ(g.ledger().total_calls(), 0u);
}

TEST(Gateway, ConcurrentLedgerMatchesSerialOracle) {
  const RoleTag roles[] = {RoleTag::Evol, RoleTag::Optimizer, RoleTag::Responder, RoleTag::Tagger};
  const std::string phases[] = {"a", "b", "c"};
  auto make = [&](std::size_t i) {
    auto r = req("prompt " + std::to_string(i), roles[i % 4]);
    return std::make_pair(r, phases[(i * 7) % 3]);
  };
  Gateway serial(MockBackend::constant("{prompt}"), fast());
  for (std::size_t i = 0; i < 100; ++i) {
    auto [r, p] = make(i);
    serial.generate(r, p);
  }
  GatewayOptions o = fast();
  o.max_in_flight = 5;
  Gateway conc(MockBackend::constant("{prompt}"), o);
  std::vector<std::string> out(100);
  parallel_for(100, 16, [&](std::size_t i) {
    auto [r, p] = make(i);
    out[i] = conc.generate(r, p);
  });
  const auto a = serial.ledger();
  const auto b = conc.ledger();
  EXPECT_EQ(b.total_calls(), 100u);
  EXPECT_EQ(a.calls_by_role, b.calls_by_role);
  EXPECT_EQ(a.calls_by_phase, b.calls_by_phase);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out[i], "prompt " + std::to_string(i));
}

TEST(Gateway, MaxInFlightIsRespected) {
  struct Probe : Backend {
    std::atomic<int> now{0}, peak{0};
    std::string complete(const GenerationRequest&) override {
      int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {}
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      --now;
      return "x";
    }
  };
  auto probe = std::make_shared<Probe>();
  GatewayOptions o = fast();
  o.max_in_flight = 3;
  Gateway g(probe, o);
  parallel_for(40, 12, [&](std::size_t) { g.generate(req("x"), "p"); });
  EXPECT_LE(probe->peak.load(), 3);
  EXPECT_GE(probe->peak.load(), 2);
}

TEST(Gateway, RateLimiterPaces) {
  GatewayOptions o = fast();
  o.requests_per_minute = 1200;  // 20 per second, burst 20
  Gateway g(MockBackend::constant("x"), o);
  const double s = seconds_of([&] {
    for (int i = 0; i < 30; ++i) g.generate(req("x"), "p");
  });
  EXPECT_GE(s, 0.4);
}

TEST(Gateway, LedgerJsonAndReset) {
  Gateway g(MockBackend::constant("x"), fast());
  g.generate(req("x", RoleTag::Tagger), "tag");
  const auto j = g.ledger().to_json();
  EXPECT_EQ(j["total_calls"], 1);
  EXPECT_EQ(j["calls_by_role"]["tagger"], 1);
  g.reset_ledger();
  EXPECT_EQ(g.ledger().total_calls(), 0u);
}

TEST(MockBackend, SelectModesAndTemplates) {
  auto mock = MockBackend::from_json(json::parse(R"J({
    "rules":[
      {"role":"optimizer","contains":"seq","responses":["s1","s2"]},
      {"contains":"cyc","select":"cycle","responses":["c1","c2"]},
      {"contains":"item","select":"item","responses":["i0","i1","i2"]},
      {"regex":"num(\\d+)","not_contains":"skip","responses":["got {1} for {subject}"]}
    ],
    "default":"fallback"})J"));
  auto r = req("seq", RoleTag::Optimizer);
  EXPECT_EQ(mock->complete(r), "s1");
  EXPECT_EQ(mock->complete(r), "s2");
  EXPECT_EQ(mock->complete(r), "s2");
  EXPECT_EQ(mock->complete(req("seq", RoleTag::Evol)), "fallback");
  EXPECT_EQ(mock->complete(req("cyc")), "c1");
  EXPECT_EQ(mock->complete(req("cyc")), "c2");
  EXPECT_EQ(mock->complete(req("cyc")), "c1");
  auto it = req("item");
  it.item_index = 4;
  EXPECT_EQ(mock->complete(it), "i1");
  auto n = req("num42");
  n.subject = "S";
  EXPECT_EQ(mock->complete(n), "got 42 for S");
  EXPECT_EQ(mock->complete(req("num42 skip")), "fallback");
}

TEST(MockBackend, NoMatchWithoutDefaultIsApiError) {
  auto mock = MockBackend::from_json(json::parse(R"({"rules":[{"contains":"zzz","responses":["x"]}]})"));
  EXPECT_THROW(mock->complete(req("abc")), ApiError);
}

TEST(MockBackend, SubstitutedTextIsNotReexpanded) {
  auto mock = MockBackend::constant("<{subject}>");
  auto r = req("x");
  r.subject = "{prompt}";
  EXPECT_EQ(mock->complete(r), "<{prompt}>");
}

TEST(MockBackend, BadScriptsRejected) {
  EXPECT_THROW(MockBackend::from_json(json::parse(R"({"rules":[{"responses":[]}]})")), ParseError);
  EXPECT_THROW(MockBackend::from_json(json::parse(R"({"rules":[{"select":"x","responses":["a"]}]})")),
               ParseError);
  EXPECT_THROW(MockBackend::from_json(json::parse(R"({"rules":[{"regex":"(","responses":["a"]}]})")),
               ParseError);
}

TEST(MockBackend, ReplayIsDeterministic) {
  const auto script = ever_improving_mock(50, 4);
  auto a = MockBackend::from_json(script);
  auto b = MockBackend::from_json(script);
  for (int i = 0; i < 20; ++i) {
    auto r = req("method <<L>><<L>> body " + std::to_string(i));
    r.subject = "s" + std::to_string(i);
    EXPECT_EQ(a->complete(r), b->complete(r));
  }
}

TEST(Cost, FullEvolutionCalls) {
  const OptimizationBudget b;
  EXPECT_EQ(estimate_cost(10000, 5, b).full_evolution_calls, 100000u);
  EXPECT_EQ(estimate_cost(7000, 1, b).full_evolution_calls, 14000u);
  EXPECT_EQ(estimate_cost(20000, 1, b).full_evolution_calls, 40000u);
  EXPECT_EQ(estimate_cost(0, 3, b).full_evolution_calls, 0u);
}

TEST(Cost, OverheadFormula) {
  OptimizationBudget b;
  EXPECT_EQ(estimate_cost(1, 1, b).optimization_calls, 10u * (10 + 5 + 5 + 5 * 50 * 2));
  b.steps = 3;
  b.batch_size = 4;
  b.trajectory_rounds = 2;
  b.samples = 2;
  b.dev_size = 7;
  const auto e = estimate_cost(5, 2, b);
  EXPECT_EQ(e.optimization_calls, 3u * (8 + 2 + 2 + 28));
  EXPECT_EQ(e.total(), 20u + e.optimization_calls);
  EXPECT_EQ(e.to_json()["total_calls"], e.total());
}
