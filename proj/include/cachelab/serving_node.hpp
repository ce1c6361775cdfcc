#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cachelab/core.hpp"
#include "cachelab/prefix_cache.hpp"
#include "cachelab/rng.hpp"
#include "cachelab/semantic_cache.hpp"
#include "cachelab/timing.hpp"

namespace cachelab {

enum class CacheMode { prefix, semantic, both };
std::string_view cache_mode_name(CacheMode m);
CacheMode parse_cache_mode(std::string_view s);

struct Defenses {
  bool isolation = false;
  double delay_injection_sigma = 0.0;  ///< seconds; adds |Normal(0, sigma)| to every response
  bool constant_time = false;          ///< report the cold-prefill time regardless of cache state
  bool streaming = true;               ///< false hides per-token timing

  bool operator==(const Defenses&) const = default;
};

struct NodeConfig {
  CacheMode cache_mode = CacheMode::prefix;
  PrefixCacheConfig prefix;
  SemanticCacheConfig semantic;
  TimingParams timing;
  std::size_t rate_limit_rpm = 5000;
  Defenses defenses;
  /// Enables debug_truth; attack-realistic runs keep this off.
  bool test_mode = false;

  void validate() const;
};

/// Ground truth about how a request was served.
struct DebugTruth {
  std::size_t k_blocks = 0;
  bool semantic_hit = false;
  std::string semantic_owner;
  double semantic_similarity = 0.0;
  std::size_t prompt_tokens = 0;
};

/// What a client observes about one request.
class RequestOutcome {
 public:
  double ttft = 0.0;
  std::vector<double> token_times;  ///< completion offsets of each token; empty without streaming
  double total_latency = 0.0;
  std::string response_text;

 private:
  friend class ServingNode;
  DebugTruth truth_;
};

struct RateLimited {
  UserId user;
  VirtualInstant retry_after;
};

using SubmitResult = std::variant<RequestOutcome, RateLimited>;

struct Request {
  UserId user;
  TokenSeq prompt;
  std::size_t gen_tokens = 1;

  static Request text(UserId user, std::string_view text, std::size_t gen_tokens = 1);
};

/// Per-user sliding 60 s window.
class RateLimiter {
 public:
  explicit RateLimiter(std::size_t rpm) : rpm_(rpm) {}

  /// Records the request and returns true when it fits in the window.
  bool try_acquire(const UserId& user, VirtualInstant now);
  VirtualInstant retry_after(const UserId& user, VirtualInstant now) const;

 private:
  std::size_t rpm_;
  std::unordered_map<UserId, std::deque<VirtualInstant>> windows_;
};

inline constexpr VirtualDuration kRateWindow = std::chrono::seconds(60);
inline constexpr std::size_t kUnlimitedRpm = static_cast<std::size_t>(1) << 62;

/// Simulated inference endpoint with shared prefix and/or semantic caches.
class ServingNode {
 public:
  explicit ServingNode(NodeConfig config);

  SubmitResult submit(const Request& request, Rng& rng);

  void advance_clock(VirtualDuration delta);
  VirtualInstant now() const;

  /// Throws DebugDisabled unless the node runs in test mode.
  DebugTruth debug_truth(const RequestOutcome& outcome) const;

  const NodeConfig& config() const { return config_; }
  PrefixCacheStats prefix_stats() const { return prefix_.stats(); }
  std::size_t semantic_entries() const { return semantic_.size(); }

 private:
  std::string synthesize_response(const TokenSeq& prompt, std::size_t gen_tokens) const;

  NodeConfig config_;
  mutable std::mutex mu_;
  VirtualInstant now_{};
  PrefixCache prefix_;
  SemanticCache semantic_;
  RateLimiter limiter_;
};

/// Submits and advances the node clock by the observed latency plus think time.
SubmitResult timed_submit(ServingNode& node, const Request& request, Rng& rng,
                          VirtualDuration think_time);

}  // namespace cachelab
