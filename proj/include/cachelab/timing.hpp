#pragma once

#include <cstddef>

#include "cachelab/rng.hpp"

namespace cachelab {

/// Latency law coefficients. All durations are in seconds.
struct TimingParams {
  double c0 = 0.05;            ///< base service overhead (s)
  double c1 = 1e-6;            ///< prefill cost (s per token^2)
  double tpot = 0.02;          ///< decode time per output token (s)
  double net_mu = 0.05;        ///< network latency mean (s)
  double net_sigma = 0.003;    ///< network latency stddev (s)
  double noise_rel = 0.001;    ///< multiplicative compute noise stddev
  double outlier_p = 0.02;     ///< probability a request's compute noise is inflated
  double outlier_scale = 5.0;  ///< inflation factor for outliers

  void validate() const;

  /// Same coefficients with every noise source switched off.
  TimingParams noise_free() const;
};

/// c0 + c1*(n-k)*n with compute noise, plus truncated network latency.
double prefill_time(std::size_t n, std::size_t k, Rng& rng, const TimingParams& p);

/// Noise-free prefill_time: c0 + c1*(n-k)*n + net_mu.
double prefill_time_mean(std::size_t n, std::size_t k, const TimingParams& p);

double decode_time(std::size_t num_tokens, Rng& rng, const TimingParams& p);

/// Network latency only; a semantic hit skips compute and decode.
double semantic_hit_time(Rng& rng, const TimingParams& p);

}  // namespace cachelab
