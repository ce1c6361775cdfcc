#include <doctest.h>

#include <algorithm>

#include "cachelab/prefix_cache.hpp"
#include "test_support.hpp"

using namespace cachelab;
using cachelab::test::random_tokens;

namespace {

VirtualInstant at(double s) { return VirtualInstant{} + from_seconds(s); }

// Longest block-aligned common prefix against every stored sequence.
std::size_t brute_force_match(const std::vector<TokenSeq>& stored, const TokenSeq& q,
                              std::size_t B) {
  std::size_t best = 0;
  for (const auto& s : stored) {
    const std::size_t limit = std::min(s.size() / B, q.size() / B) * B;
    std::size_t l = 0;
    while (l < limit && s.tokens[l] == q.tokens[l]) ++l;
    best = std::max(best, l / B);
  }
  return best;
}

PrefixCacheConfig small_config(std::size_t B = 4) {
  PrefixCacheConfig c;
  c.block_size = B;
  c.ttl = kForever;
  return c;
}

}  // namespace

TEST_CASE("match_prefix agrees with a brute-force longest common prefix") {
  Rng rng = derive_rng(3, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t B = 1 + uniform_index(rng, 4);
    PrefixCacheConfig cfg = small_config(B);
    cfg.verify_tokens = trial % 2 == 0;
    PrefixCache cache(cfg);
    std::vector<TokenSeq> stored;
    const std::size_t n_insert = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < n_insert; ++i) {
      stored.push_back(random_tokens(rng, uniform_index(rng, 20), 2));
      cache.insert_sequence(stored.back(), "u", at(0));
    }
    const TokenSeq q = random_tokens(rng, uniform_index(rng, 20), 2);
    CAPTURE(trial);
    const std::size_t expected = brute_force_match(stored, q, B);
    CHECK(cache.peek_prefix(q, "u", at(1)) == expected);
    CHECK(cache.match_prefix(q, "u", at(1)) == expected);
  }
}

TEST_CASE("only complete blocks are cached") {
  PrefixCache cache(small_config(4));
  Rng rng = derive_rng(1, 2);
  const TokenSeq s = random_tokens(rng, 10);
  CHECK(cache.insert_sequence(s, "a", at(0)) == 2);
  CHECK(cache.resident_blocks() == 2);
  CHECK(cache.stats().resident_tokens == 8);
  CHECK(cache.insert_sequence(s, "a", at(0)) == 0);
  CHECK(cache.match_prefix(s, "a", at(0)) == 2);
}

TEST_CASE("a block matches only after its predecessors") {
  PrefixCache cache(small_config(2));
  cache.insert_sequence(test::seq_of({1, 2, 3, 4, 5, 6}), "a", at(0));
  CHECK(cache.peek_prefix(test::seq_of({9, 9, 3, 4, 5, 6}), "a", at(0)) == 0);
  CHECK(cache.peek_prefix(test::seq_of({1, 2, 3, 9, 5, 6}), "a", at(0)) == 1);
  CHECK(cache.peek_prefix(test::seq_of({1, 2, 3, 4, 5, 6, 7}), "a", at(0)) == 3);
}

TEST_CASE("sliding TTL expires idle chains and refreshes touched ones") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.ttl = std::chrono::seconds(10);
  PrefixCache cache(cfg);
  const TokenSeq s = test::seq_of({1, 2, 3, 4});
  const TokenSeq t = test::seq_of({5, 6, 7, 8});
  cache.insert_sequence(s, "a", at(0));
  cache.insert_sequence(t, "a", at(0));
  CHECK(cache.match_prefix(s, "a", at(8)) == 2);
  CHECK(cache.peek_prefix(t, "a", at(10)) == 2);
  CHECK(cache.peek_prefix(t, "a", at(10.5)) == 0);
  CHECK(cache.peek_prefix(s, "a", at(17)) == 2);
  CHECK(cache.evict_expired(at(12)) == 2);
  CHECK(cache.resident_blocks() == 2);
  CHECK(cache.evict_expired(at(30)) == 2);
  CHECK(cache.resident_blocks() == 0);
}

TEST_CASE("fixed TTL ignores accesses") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.ttl = std::chrono::seconds(10);
  cfg.ttl_mode = TtlMode::fixed_from_insert;
  PrefixCache cache(cfg);
  const TokenSeq s = test::seq_of({1, 2, 3, 4});
  cache.insert_sequence(s, "a", at(0));
  CHECK(cache.match_prefix(s, "a", at(9)) == 2);
  CHECK(cache.peek_prefix(s, "a", at(11)) == 0);
  CHECK(cache.evict_expired(at(11)) == 2);
}

TEST_CASE("expired prefixes are rebuilt on insert") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.ttl = std::chrono::seconds(1);
  PrefixCache cache(cfg);
  const TokenSeq s = test::seq_of({1, 2, 3, 4});
  cache.insert_sequence(s, "a", at(0));
  CHECK(cache.insert_sequence(s, "a", at(5)) == 2);
  CHECK(cache.peek_prefix(s, "a", at(5)) == 2);
  CHECK(cache.resident_blocks() == 2);
}

TEST_CASE("capacity evicts least recently used leaves first") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.capacity_tokens = 8;
  PrefixCache cache(cfg);
  const TokenSeq a = test::seq_of({1, 1, 2, 2});
  const TokenSeq b = test::seq_of({3, 3, 4, 4});
  cache.insert_sequence(a, "u", at(0));
  cache.insert_sequence(b, "u", at(1));
  cache.match_prefix(a, "u", at(2));
  cache.insert_sequence(test::seq_of({5, 5}), "u", at(3));
  CHECK(cache.stats().resident_tokens <= 8);
  CHECK(cache.peek_prefix(a, "u", at(3)) == 2);
  CHECK(cache.peek_prefix(b, "u", at(3)) == 1);
}

TEST_CASE("capacity keeps the newest chain and consistent accounting") {
  Rng rng = derive_rng(5, 5);
  PrefixCacheConfig cfg = small_config(2);
  cfg.capacity_tokens = 12;
  PrefixCache cache(cfg);
  for (int i = 0; i < 300; ++i) {
    const TokenSeq s = random_tokens(rng, 2 * (1 + uniform_index(rng, 5)), 2);
    cache.insert_sequence(s, "u", at(i));
    REQUIRE(cache.stats().resident_tokens <= 12);
    // the newest chain is the most recently used, so it survives whole when it fits
    if (s.size() <= 12) CHECK(cache.peek_prefix(s, "u", at(i)) == s.size() / 2);
  }
  CHECK(cache.stats().evictions > 0);
  CHECK(cache.stats().resident_tokens == cache.resident_blocks() * 2);
}

TEST_CASE("isolation keeps users in separate namespaces") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.isolation = true;
  PrefixCache cache(cfg);
  const TokenSeq s = test::seq_of({1, 2, 3, 4});
  cache.insert_sequence(s, "victim", at(0));
  CHECK(cache.peek_prefix(s, "victim", at(0)) == 2);
  CHECK(cache.peek_prefix(s, "attacker", at(0)) == 0);
  CHECK(cache.match_prefix(s, "attacker", at(0)) == 0);
  cache.insert_sequence(s, "attacker", at(0));
  CHECK(cache.resident_blocks() == 4);

  PrefixCache shared(small_config(2));
  shared.insert_sequence(s, "victim", at(0));
  CHECK(shared.peek_prefix(s, "attacker", at(0)) == 2);
}

TEST_CASE("stats count hits, misses, insertions and evictions") {
  PrefixCacheConfig cfg = small_config(2);
  cfg.ttl = std::chrono::seconds(1);
  PrefixCache cache(cfg);
  const TokenSeq s = test::seq_of({1, 2, 3, 4, 5, 6});
  cache.insert_sequence(s, "a", at(0));
  cache.match_prefix(test::seq_of({1, 2, 3, 4, 9, 9}), "a", at(0));
  PrefixCacheStats st = cache.stats();
  CHECK(st.insertions == 3);
  CHECK(st.hits == 2);
  CHECK(st.misses == 1);
  CHECK(st.evictions == 0);
  const PrefixCacheStats before = cache.stats();
  cache.peek_prefix(s, "a", at(0));
  CHECK(cache.stats() == before);
  cache.evict_expired(at(10));
  CHECK(cache.stats().evictions == 3);
  CHECK(cache.stats().resident_tokens == 0);
}

TEST_CASE("config validation") {
  PrefixCacheConfig c;
  c.block_size = 0;
  CHECK_THROWS_AS(PrefixCache{c}, DomainError);
  c = PrefixCacheConfig{};
  c.capacity_tokens = 4;
  CHECK_THROWS_AS(PrefixCache{c}, DomainError);
}

TEST_CASE("chain digests depend on the parent") {
  const std::vector<TokenId> block = {1, 2};
  const Digest128 root = chain_digest({}, block);
  CHECK(chain_digest(root, block) != root);
  CHECK(chain_digest({}, block) == root);
}
