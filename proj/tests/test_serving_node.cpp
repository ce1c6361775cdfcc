#include <doctest.h>

#include "cachelab/serving_node.hpp"
#include "test_support.hpp"

using namespace cachelab;
using cachelab::test::random_tokens;

namespace {

NodeConfig test_config() {
  NodeConfig c;
  c.test_mode = true;
  c.timing = TimingParams{}.noise_free();
  return c;
}

Request prompt_request(const UserId& user, const TokenSeq& seq, std::size_t gen = 1) {
  return Request{user, seq, gen};
}

const RequestOutcome& outcome(const SubmitResult& r) {
  REQUIRE(std::holds_alternative<RequestOutcome>(r));
  return std::get<RequestOutcome>(r);
}

}  // namespace

TEST_CASE("ttft reflects cached prefix blocks") {
  ServingNode node(test_config());
  Rng rng = derive_rng(1, 1);
  const TokenSeq p = random_tokens(rng, 800, 50);
  const auto first = outcome(node.submit(prompt_request("victim", p), rng));
  CHECK(node.debug_truth(first).k_blocks == 0);
  CHECK(first.ttft == prefill_time_mean(800, 0, node.config().timing));
  const auto second = outcome(node.submit(prompt_request("attacker", p), rng));
  CHECK(node.debug_truth(second).k_blocks == 50);
  CHECK(second.ttft == prefill_time_mean(800, 800, node.config().timing));
}

TEST_CASE("tokens stream after the first one") {
  ServingNode node(test_config());
  Rng rng = derive_rng(1, 2);
  const auto o = outcome(node.submit(prompt_request("u", random_tokens(rng, 64), 5), rng));
  REQUIRE(o.token_times.size() == 5);
  CHECK(o.token_times.front() == o.ttft);
  for (std::size_t i = 1; i < 5; ++i) CHECK(o.token_times[i] > o.token_times[i - 1]);
  CHECK(o.total_latency == o.token_times.back());
  CHECK_FALSE(o.response_text.empty());
}

TEST_CASE("rate limiter rejects the request past the per-minute budget") {
  NodeConfig c = test_config();
  c.rate_limit_rpm = 5000;
  ServingNode node(c);
  Rng rng = derive_rng(2, 2);
  const TokenSeq p = random_tokens(rng, 32);
  for (int i = 0; i < 5000; ++i) {
    REQUIRE(std::holds_alternative<RequestOutcome>(node.submit(prompt_request("a", p), rng)));
  }
  const PrefixCacheStats before = node.prefix_stats();
  const auto limited = node.submit(prompt_request("a", p), rng);
  REQUIRE(std::holds_alternative<RateLimited>(limited));
  CHECK(std::get<RateLimited>(limited).retry_after == VirtualInstant{} + kRateWindow);
  CHECK(node.prefix_stats() == before);
  CHECK(std::holds_alternative<RequestOutcome>(node.submit(prompt_request("b", p), rng)));
  node.advance_clock(kRateWindow);
  CHECK(std::holds_alternative<RequestOutcome>(node.submit(prompt_request("a", p), rng)));
}

TEST_CASE("sliding window frees slots as old requests age out") {
  RateLimiter lim(2);
  const VirtualInstant t0{};
  CHECK(lim.try_acquire("u", t0));
  CHECK(lim.try_acquire("u", t0 + std::chrono::seconds(30)));
  CHECK_FALSE(lim.try_acquire("u", t0 + std::chrono::seconds(59)));
  CHECK(lim.retry_after("u", t0 + std::chrono::seconds(59)) == t0 + kRateWindow);
  CHECK(lim.try_acquire("u", t0 + std::chrono::seconds(60)));
}

TEST_CASE("debug truth is unavailable outside test mode") {
  NodeConfig c = test_config();
  c.test_mode = false;
  ServingNode node(c);
  Rng rng = derive_rng(1, 3);
  const auto o = outcome(node.submit(prompt_request("u", random_tokens(rng, 32)), rng));
  CHECK_THROWS_AS(node.debug_truth(o), DebugDisabled);
}

TEST_CASE("isolation defense separates users") {
  NodeConfig c = test_config();
  c.defenses.isolation = true;
  ServingNode node(c);
  Rng rng = derive_rng(1, 4);
  const TokenSeq p = random_tokens(rng, 160, 50);
  node.submit(prompt_request("victim", p), rng);
  CHECK(node.debug_truth(outcome(node.submit(prompt_request("attacker", p), rng))).k_blocks == 0);
  CHECK(node.debug_truth(outcome(node.submit(prompt_request("victim", p), rng))).k_blocks == 10);
}

TEST_CASE("constant time reports the cold prefill") {
  NodeConfig c = test_config();
  c.defenses.constant_time = true;
  ServingNode node(c);
  Rng rng = derive_rng(1, 5);
  const TokenSeq p = random_tokens(rng, 320, 50);
  node.submit(prompt_request("victim", p), rng);
  const auto o = outcome(node.submit(prompt_request("attacker", p), rng));
  CHECK(node.debug_truth(o).k_blocks == 20);
  CHECK(o.ttft == prefill_time_mean(320, 0, c.timing));
}

TEST_CASE("delay injection only adds latency") {
  NodeConfig c = test_config();
  c.defenses.delay_injection_sigma = 0.05;
  ServingNode node(c);
  Rng rng = derive_rng(1, 6);
  const TokenSeq p = random_tokens(rng, 320, 50);
  double spread = 0;
  for (int i = 0; i < 100; ++i) {
    const auto o = outcome(node.submit(prompt_request("u", p), rng));
    CHECK(o.ttft >= prefill_time_mean(320, 320, c.timing));
    spread = std::max(spread, o.ttft - prefill_time_mean(320, 320, c.timing));
  }
  CHECK(spread > 0.05);
}

TEST_CASE("without streaming only the total latency is visible") {
  NodeConfig c = test_config();
  c.defenses.streaming = false;
  ServingNode node(c);
  Rng rng = derive_rng(1, 7);
  const auto o = outcome(node.submit(prompt_request("u", random_tokens(rng, 64), 4), rng));
  CHECK(o.token_times.empty());
  CHECK(o.ttft == o.total_latency);
  CHECK(o.total_latency == doctest::Approx(prefill_time_mean(64, 0, c.timing) + 3 * c.timing.tpot));
}

TEST_CASE("semantic mode answers similar queries from the cache") {
  NodeConfig c = test_config();
  c.cache_mode = CacheMode::semantic;
  ServingNode node(c);
  Rng rng = derive_rng(1, 8);
  const auto miss = outcome(node.submit(Request::text("victim", "the landlord refuses to refund the deposit", 3), rng));
  CHECK_FALSE(node.debug_truth(miss).semantic_hit);
  CHECK(node.semantic_entries() == 1);
  const auto hit = outcome(node.submit(Request::text("attacker", "the landlord refuses to refund my deposit", 3), rng));
  const DebugTruth t = node.debug_truth(hit);
  CHECK(t.semantic_hit);
  CHECK(t.semantic_owner == "victim");
  CHECK(hit.response_text == miss.response_text);
  CHECK(hit.ttft == c.timing.net_mu);
  CHECK(hit.ttft < miss.ttft);
}

TEST_CASE("timed_submit advances the clock by ttft plus think time") {
  ServingNode node(test_config());
  Rng rng = derive_rng(1, 9);
  const auto r = timed_submit(node, prompt_request("u", random_tokens(rng, 48)), rng,
                              std::chrono::milliseconds(10));
  const double ttft = outcome(r).ttft;
  CHECK(to_seconds(node.now()) == doctest::Approx(ttft + 0.01).epsilon(1e-9));
  CHECK_THROWS_AS(node.advance_clock(-std::chrono::seconds(1)), DomainError);
}

TEST_CASE("prefix entries expire with the node clock") {
  NodeConfig c = test_config();
  c.prefix.ttl = std::chrono::seconds(5);
  ServingNode node(c);
  Rng rng = derive_rng(1, 10);
  const TokenSeq p = random_tokens(rng, 64, 50);
  node.submit(prompt_request("victim", p), rng);
  node.advance_clock(std::chrono::seconds(6));
  CHECK(node.debug_truth(outcome(node.submit(prompt_request("attacker", p), rng))).k_blocks == 0);
}

TEST_CASE("invalid configuration and requests throw") {
  NodeConfig c = test_config();
  c.rate_limit_rpm = 0;
  CHECK_THROWS_AS(ServingNode{c}, ConfigInvalid);
  c = test_config();
  c.defenses.delay_injection_sigma = -1;
  CHECK_THROWS_AS(ServingNode{c}, ConfigInvalid);
  ServingNode node(test_config());
  Rng rng = derive_rng(1, 11);
  CHECK_THROWS_AS(node.submit(prompt_request("u", random_tokens(rng, 4), 0), rng), DomainError);
  CHECK(parse_cache_mode(cache_mode_name(CacheMode::both)) == CacheMode::both);
  CHECK_THROWS_AS(parse_cache_mode("x"), ConfigInvalid);
}
