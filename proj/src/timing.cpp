#include "cachelab/timing.hpp"

#include <algorithm>
#include <string>

#include "cachelab/errors.hpp"

namespace cachelab {

void TimingParams::validate() const {
  const double values[] = {c0, c1, tpot, net_mu, net_sigma, noise_rel, outlier_p, outlier_scale};
  for (double v : values) {
    if (!(v >= 0.0)) throw DomainError("timing parameters must be non-negative");
  }
  if (outlier_p > 1.0) throw DomainError("outlier_p must lie in [0, 1]");
}

TimingParams TimingParams::noise_free() const {
  TimingParams p = *this;
  p.net_sigma = 0.0;
  p.noise_rel = 0.0;
  p.outlier_p = 0.0;
  return p;
}

namespace {

double compute_noise(Rng& rng, const TimingParams& p) {
  if (p.noise_rel <= 0.0 && p.outlier_p <= 0.0) return 0.0;
  double sigma = p.noise_rel;
  if (p.outlier_p > 0.0 && uniform01(rng) < p.outlier_p) sigma *= p.outlier_scale;
  return normal(rng, 0.0, sigma);
}

double network(Rng& rng, const TimingParams& p) {
  return std::max(0.0, normal(rng, p.net_mu, p.net_sigma));
}

}  // namespace

double prefill_time_mean(std::size_t n, std::size_t k, const TimingParams& p) {
  if (k > n) throw DomainError("hit tokens k=" + std::to_string(k) + " exceed n=" + std::to_string(n));
  return p.c0 + p.c1 * static_cast<double>(n - k) * static_cast<double>(n) + p.net_mu;
}

double prefill_time(std::size_t n, std::size_t k, Rng& rng, const TimingParams& p) {
  if (k > n) throw DomainError("hit tokens k=" + std::to_string(k) + " exceed n=" + std::to_string(n));
  const double base = p.c0 + p.c1 * static_cast<double>(n - k) * static_cast<double>(n);
  const double eps = compute_noise(rng, p);
  return base * (1.0 + eps) + network(rng, p);
}

double decode_time(std::size_t num_tokens, Rng& rng, const TimingParams& p) {
  if (num_tokens == 0) return 0.0;
  const double base = p.tpot * static_cast<double>(num_tokens);
  return std::max(0.0, base * (1.0 + compute_noise(rng, p)));
}

double semantic_hit_time(Rng& rng, const TimingParams& p) { return network(rng, p); }

}  // namespace cachelab
