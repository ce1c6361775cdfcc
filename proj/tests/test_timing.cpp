#include <doctest.h>

#include "cachelab/timing.hpp"
#include "test_support.hpp"

using namespace cachelab;
using cachelab::test::oracle;

TEST_CASE("prefill means match the closed form") {
  const TimingParams p;
  for (const auto& c : oracle()["timing"]["prefill_mean"]) {
    const std::size_t n = c["n"], k = c["k"];
    CAPTURE(n);
    CAPTURE(k);
    CHECK(prefill_time_mean(n, k, p) == doctest::Approx(c["mean"].get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("cold prefill compute grows quadratically") {
  const TimingParams p;
  const double fixed = p.c0 + p.net_mu;
  const double t400 = prefill_time_mean(400, 0, p) - fixed;
  const double t800 = prefill_time_mean(800, 0, p) - fixed;
  const double t1600 = prefill_time_mean(1600, 0, p) - fixed;
  CHECK(t800 / t400 == doctest::Approx(4.0));
  CHECK(t1600 / t400 == doctest::Approx(16.0));
}

TEST_CASE("prefill time decreases monotonically in cached tokens") {
  const TimingParams p;
  for (std::size_t k = 16; k <= 800; k += 16) {
    CHECK(prefill_time_mean(800, k, p) < prefill_time_mean(800, k - 16, p));
    CHECK(prefill_time_mean(800, k - 16, p) - prefill_time_mean(800, k, p) ==
          doctest::Approx(oracle()["timing"]["gap_800"].get<double>()));
  }
}

TEST_CASE("sampled prefill times average to the mean") {
  const auto& o = oracle()["timing"]["prefill_sample"];
  const TimingParams p;
  Rng rng = derive_rng(9, 1);
  const int draws = o["draws"];
  double sum = 0;
  for (int i = 0; i < draws; ++i) sum += prefill_time(o["n"], o["k"], rng, p);
  CHECK(std::abs(sum / draws - o["mean"].get<double>()) < o["tolerance"].get<double>());
}

TEST_CASE("decode time averages to tpot times tokens") {
  const auto& o = oracle()["timing"]["decode"];
  const TimingParams p;
  Rng rng = derive_rng(9, 2);
  const int draws = o["draws"];
  double sum = 0;
  for (int i = 0; i < draws; ++i) {
    const double d = decode_time(o["tokens"], rng, p);
    REQUIRE(d >= 0.0);
    sum += d;
  }
  CHECK(std::abs(sum / draws - o["mean"].get<double>()) < o["tolerance"].get<double>());
  CHECK(decode_time(0, rng, p) == 0.0);
}

TEST_CASE("noise-free parameters reproduce the mean exactly") {
  const TimingParams p = TimingParams{}.noise_free();
  Rng rng = derive_rng(1, 1);
  for (std::size_t k = 0; k <= 800; k += 80) {
    CHECK(prefill_time(800, k, rng, p) == prefill_time_mean(800, k, p));
  }
  CHECK(semantic_hit_time(rng, p) == p.net_mu);
  CHECK(decode_time(10, rng, p) == doctest::Approx(10 * p.tpot));
}

TEST_CASE("semantic hits cost only network latency") {
  const TimingParams p;
  Rng rng = derive_rng(1, 3);
  for (int i = 0; i < 1000; ++i) {
    const double t = semantic_hit_time(rng, p);
    CHECK(t >= 0.0);
    CHECK(t < prefill_time_mean(16, 0, p));
  }
}

TEST_CASE("invalid inputs throw") {
  TimingParams p;
  Rng rng = derive_rng(1, 1);
  CHECK_THROWS_AS(prefill_time(10, 11, rng, p), DomainError);
  CHECK_THROWS_AS(prefill_time_mean(10, 11, p), DomainError);
  p.c1 = -1;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = TimingParams{};
  p.outlier_p = 1.5;
  CHECK_THROWS_AS(p.validate(), DomainError);
}
