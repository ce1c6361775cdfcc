#include "cachelab/serving_node.hpp"

#include <cmath>

namespace cachelab {

std::string_view cache_mode_name(CacheMode m) {
  switch (m) {
    case CacheMode::prefix: return "prefix";
    case CacheMode::semantic: return "semantic";
    case CacheMode::both: return "both";
  }
  return "?";
}

CacheMode parse_cache_mode(std::string_view s) {
  if (s == "prefix") return CacheMode::prefix;
  if (s == "semantic") return CacheMode::semantic;
  if (s == "both") return CacheMode::both;
  throw ConfigInvalid("unknown cache_mode '" + std::string(s) + "'");
}

void NodeConfig::validate() const {
  if (rate_limit_rpm < 1) throw ConfigInvalid("rate_limit_rpm must be >= 1");
  if (defenses.delay_injection_sigma < 0.0)
    throw ConfigInvalid("delay_injection_sigma must be >= 0");
  prefix.validate();
  semantic.validate();
  timing.validate();
}

Request Request::text(UserId user, std::string_view text, std::size_t gen_tokens) {
  return Request{std::move(user), tokenize(text), gen_tokens};
}

bool RateLimiter::try_acquire(const UserId& user, VirtualInstant now) {
  auto& window = windows_[user];
  while (!window.empty() && now - window.front() >= kRateWindow) window.pop_front();
  if (window.size() + 1 > rpm_) return false;
  window.push_back(now);
  return true;
}

VirtualInstant RateLimiter::retry_after(const UserId& user, VirtualInstant now) const {
  const auto it = windows_.find(user);
  if (it == windows_.end() || it->second.empty()) return now;
  return it->second.front() + kRateWindow;
}

namespace {

NodeConfig with_defenses_applied(NodeConfig c) {
  if (c.defenses.isolation) {
    c.prefix.isolation = true;
    c.semantic.isolation = true;
  }
  c.validate();
  return c;
}

}  // namespace

ServingNode::ServingNode(NodeConfig config)
    : config_(with_defenses_applied(std::move(config))),
      prefix_(config_.prefix),
      semantic_(config_.semantic),
      limiter_(config_.rate_limit_rpm) {}

std::string ServingNode::synthesize_response(const TokenSeq& prompt, std::size_t gen_tokens) const {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (TokenId t : prompt.tokens) h = splitmix64(h ^ t);
  return "response " + std::to_string(h % 1000000007ULL) + " with " + std::to_string(gen_tokens) +
         " tokens";
}

SubmitResult ServingNode::submit(const Request& request, Rng& rng) {
  if (request.gen_tokens < 1) throw DomainError("gen_tokens must be >= 1");
  std::lock_guard lock(mu_);
  if (!limiter_.try_acquire(request.user, now_))
    return RateLimited{request.user, limiter_.retry_after(request.user, now_)};

  const TimingParams& tp = config_.timing;
  const std::size_t n = request.prompt.size();
  RequestOutcome out;
  out.truth_.prompt_tokens = n;

  bool semantic_hit = false;
  if (config_.cache_mode != CacheMode::prefix) {
    if (auto hit = semantic_.lookup(request.prompt.source_text, now_, request.user)) {
      semantic_hit = true;
      out.ttft = semantic_hit_time(rng, tp);
      out.response_text = std::move(hit->response);
      out.truth_.semantic_hit = true;
      out.truth_.semantic_owner = std::move(hit->owner);
      out.truth_.semantic_similarity = hit->similarity;
    }
  }

  if (!semantic_hit) {
    std::size_t k_blocks = 0;
    if (config_.cache_mode != CacheMode::semantic) {
      k_blocks = prefix_.match_prefix(request.prompt, request.user, now_);
    }
    out.truth_.k_blocks = k_blocks;
    out.ttft = prefill_time(n, std::min(n, k_blocks * config_.prefix.block_size), rng, tp);
    if (config_.cache_mode != CacheMode::semantic) {
      prefix_.insert_sequence(request.prompt, request.user, now_);
    }
    out.response_text = synthesize_response(request.prompt, request.gen_tokens);
    if (config_.cache_mode != CacheMode::prefix) {
      semantic_.insert(request.prompt.source_text, out.response_text, now_, request.user);
    }
  }

  const Defenses& d = config_.defenses;
  if (d.constant_time) out.ttft = prefill_time_mean(n, 0, tp);

  // A semantic hit returns the whole response at once unless constant time
  // forces it to look like a generated one.
  if (!semantic_hit || d.constant_time) {
    out.token_times.reserve(request.gen_tokens);
    double t = out.ttft;
    out.token_times.push_back(t);
    for (std::size_t i = 1; i < request.gen_tokens; ++i) {
      t += decode_time(1, rng, tp);
      out.token_times.push_back(t);
    }
  }

  if (d.delay_injection_sigma > 0.0) {
    const double delay = std::abs(normal(rng, 0.0, d.delay_injection_sigma));
    out.ttft += delay;
    for (double& t : out.token_times) t += delay;
  }

  out.total_latency = out.token_times.empty() ? out.ttft : out.token_times.back();
  if (!d.streaming) {
    out.ttft = out.total_latency;
    out.token_times.clear();
  }
  return out;
}

void ServingNode::advance_clock(VirtualDuration delta) {
  if (delta < VirtualDuration::zero()) throw DomainError("cannot move the clock backwards");
  std::lock_guard lock(mu_);
  if (delta == VirtualDuration::zero()) return;
  now_ += delta;
  prefix_.evict_expired(now_);
  semantic_.evict_expired(now_);
}

VirtualInstant ServingNode::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

DebugTruth ServingNode::debug_truth(const RequestOutcome& outcome) const {
  if (!config_.test_mode) throw DebugDisabled("debug_truth requires a node in test mode");
  return outcome.truth_;
}

SubmitResult timed_submit(ServingNode& node, const Request& request, Rng& rng,
                          VirtualDuration think_time) {
  SubmitResult r = node.submit(request, rng);
  VirtualDuration elapsed = think_time;
  if (const auto* o = std::get_if<RequestOutcome>(&r)) elapsed += from_seconds(o->ttft);
  node.advance_clock(elapsed);
  return r;
}

}  // namespace cachelab
