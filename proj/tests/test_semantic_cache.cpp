#include <doctest.h>

#include <cmath>

#include "cachelab/semantic_cache.hpp"
#include "test_support.hpp"

using namespace cachelab;
using cachelab::test::oracle;

namespace {

VirtualInstant at(double s) { return VirtualInstant{} + from_seconds(s); }

std::string random_phrase(Rng& rng) {
  static const char* words[] = {"file", "divorce", "landlord", "deposit", "refund", "wage",
                                "visa", "court", "tax", "my", "the", "for", "how", "can"};
  std::string s;
  const std::size_t n = 2 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) s += std::string(i ? " " : "") + words[uniform_index(rng, 14)];
  return s;
}

}  // namespace

TEST_CASE("cosine matches the reference embedding") {
  for (const auto& p : oracle()["embed"]["pairs"]) {
    const std::string a = p["a"], b = p["b"];
    CAPTURE(a);
    CAPTURE(b);
    CHECK(cosine(embed(a), embed(b)) == doctest::Approx(p["cosine"].get<double>()).epsilon(1e-12));
  }
  const auto abc = embed("abc");
  for (const auto& nz : oracle()["embed"]["abc_nonzero"]) {
    CHECK(abc.values.at(nz[0].get<std::size_t>()) == doctest::Approx(nz[1].get<double>()));
  }
}

TEST_CASE("embeddings are unit norm or zero") {
  Rng rng = derive_rng(2, 2);
  for (int i = 0; i < 100; ++i) {
    const auto e = embed(random_phrase(rng));
    double norm = 0;
    for (double v : e.values) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0));
  }
  CHECK(embed("ab").is_zero());
  CHECK(cosine(embed("ab"), embed("abc")) == 0.0);
  CHECK(embed("x", 17).values.size() == 17);
}

TEST_CASE("lookup returns the most similar entry when it reaches the threshold") {
  Rng rng = derive_rng(4, 4);
  for (int trial = 0; trial < 200; ++trial) {
    SemanticCacheConfig cfg;
    cfg.threshold = 0.3 + 0.6 * uniform01(rng);
    SemanticCache cache(cfg);
    std::vector<std::string> stored;
    for (int i = 0; i < 8; ++i) {
      stored.push_back(random_phrase(rng));
      cache.insert(stored.back(), "r" + std::to_string(i), at(0));
    }
    const std::string q = random_phrase(rng);
    // brute force over distinct texts; re-inserting a text replaced the earlier entry
    double best = -2;
    std::string best_text;
    for (const auto& e : cache.entries()) {
      const double c = cosine(embed(q), embed(e.query_text));
      if (c > best) {
        best = c;
        best_text = e.query_text;
      }
    }
    const auto hit = cache.lookup(q, at(1));
    CAPTURE(q);
    if (best >= cfg.threshold) {
      REQUIRE(hit.has_value());
      CHECK(hit->similarity == doctest::Approx(best));
      CHECK(hit->query_text == best_text);
    } else {
      CHECK_FALSE(hit.has_value());
    }
  }
}

TEST_CASE("re-inserting a query replaces its entry") {
  SemanticCache cache(SemanticCacheConfig{});
  cache.insert("how do i file for divorce", "a", at(0));
  cache.insert("how do i file for divorce", "b", at(1));
  CHECK(cache.size() == 1);
  CHECK(cache.lookup("how do i file for divorce", at(1))->response == "b");
}

TEST_CASE("entries expire after the ttl") {
  SemanticCacheConfig cfg;
  cfg.ttl = std::chrono::seconds(10);
  SemanticCache cache(cfg);
  cache.insert("tenant deposit refund", "r", at(0));
  CHECK(cache.lookup("tenant deposit refund", at(10)).has_value());
  CHECK_FALSE(cache.lookup("tenant deposit refund", at(10.5)).has_value());
  CHECK(cache.evict_expired(at(11)) == 1);
  CHECK(cache.size() == 0);
}

TEST_CASE("capacity evicts the oldest insertion") {
  SemanticCacheConfig cfg;
  cfg.capacity_entries = 2;
  SemanticCache cache(cfg);
  cache.insert("first query text", "1", at(0));
  cache.insert("second query text", "2", at(0));
  cache.insert("third query text", "3", at(0));
  CHECK(cache.size() == 2);
  for (const auto& e : cache.entries()) CHECK(e.query_text != "first query text");
}

TEST_CASE("isolation hides other users' entries") {
  SemanticCacheConfig cfg;
  cfg.isolation = true;
  SemanticCache cache(cfg);
  cache.insert("visa overstay penalty", "r", at(0), "victim");
  CHECK(cache.lookup("visa overstay penalty", at(0), "victim").has_value());
  CHECK_FALSE(cache.lookup("visa overstay penalty", at(0), "attacker").has_value());
  cache.insert("visa overstay penalty", "s", at(0), "attacker");
  CHECK(cache.size() == 2);
  CHECK(cache.lookup("visa overstay penalty", at(0), "victim")->owner == "victim");
}

TEST_CASE("hits report owner and similarity") {
  SemanticCache cache(SemanticCacheConfig{});
  cache.insert("the landlord refuses to refund the deposit", "resp", at(0), "victim");
  const auto hit = cache.lookup("the landlord refuses to refund my deposit", at(0), "attacker");
  REQUIRE(hit.has_value());
  CHECK(hit->owner == "victim");
  CHECK(hit->similarity == doctest::Approx(0.9136985548476936));
  CHECK(hit->response == "resp");
}

TEST_CASE("config validation") {
  SemanticCacheConfig c;
  c.threshold = 1.5;
  CHECK_THROWS_AS(SemanticCache{c}, DomainError);
  c = SemanticCacheConfig{};
  c.capacity_entries = 0;
  CHECK_THROWS_AS(SemanticCache{c}, DomainError);
}
