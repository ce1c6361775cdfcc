#include "cachelab/semantic_cache.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace cachelab {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kBucketSeed = 0;
constexpr std::uint64_t kSignSeed = 0x5bd1e995ULL;

}  // namespace

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

EmbeddingVector embed(std::string_view text, std::size_t dim) {
  EmbeddingVector out;
  out.values.assign(dim, 0.0);
  std::string lower(text);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower.size() < 3) return out;
  for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
    const std::string_view tri(lower.data() + i, 3);
    const std::size_t bucket = fnv1a(tri, kBucketSeed) % dim;
    const double sign = (fnv1a(tri, kSignSeed) & 1U) != 0 ? -1.0 : 1.0;
    out.values[bucket] += sign;
  }
  double norm = 0.0;
  for (double v : out.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : out.values) v /= norm;
  }
  return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  const std::size_t n = std::min(a.values.size(), b.values.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

void SemanticCacheConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw DomainError("semantic threshold must lie in (0, 1]");
  if (capacity_entries < 1) throw DomainError("semantic capacity_entries must be >= 1");
  if (dim < 1) throw DomainError("embedding dim must be >= 1");
}

SemanticCache::SemanticCache(SemanticCacheConfig config) : config_(config) { config_.validate(); }

bool SemanticCache::visible(const SemanticEntry& e, VirtualInstant now,
                            const std::string& user) const {
  if (config_.isolation && e.owner != user) return false;
  return config_.ttl == kForever || now - e.inserted_at <= config_.ttl;
}

std::optional<SemanticHit> SemanticCache::lookup(std::string_view query, VirtualInstant now,
                                                 const std::string& user) const {
  return lookup_embedded(embed(query, config_.dim), now, user);
}

std::optional<SemanticHit> SemanticCache::lookup_embedded(const EmbeddingVector& q,
                                                          VirtualInstant now,
                                                          const std::string& user) const {
  std::lock_guard lock(mu_);
  const SemanticEntry* best = nullptr;
  double best_sim = -2.0;
  for (const auto& e : entries_) {
    if (!visible(e, now, user)) continue;
    const double sim = cosine(q, e.embedding);
    // entries_ is kept in insertion order, so strict > keeps the earliest on ties
    if (sim > best_sim) {
      best_sim = sim;
      best = &e;
    }
  }
  if (best == nullptr || best_sim < config_.threshold) return std::nullopt;
  return SemanticHit{best->response, best_sim, best->owner, best->query_text};
}

void SemanticCache::insert(std::string_view query, std::string_view response, VirtualInstant now,
                           const std::string& user) {
  std::lock_guard lock(mu_);
  const auto same = std::find_if(entries_.begin(), entries_.end(), [&](const SemanticEntry& e) {
    return e.query_text == query && (!config_.isolation || e.owner == user);
  });
  if (same != entries_.end()) entries_.erase(same);
  SemanticEntry e;
  e.query_text = std::string(query);
  e.embedding = embed(query, config_.dim);
  e.response = std::string(response);
  e.inserted_at = now;
  e.owner = user;
  e.sequence = next_sequence_++;
  entries_.push_back(std::move(e));
  while (entries_.size() > config_.capacity_entries) {
    // oldest inserted_at, first inserted among equals
    auto oldest = std::min_element(entries_.begin(), entries_.end(),
                                   [](const SemanticEntry& a, const SemanticEntry& b) {
                                     return std::tie(a.inserted_at, a.sequence) <
                                            std::tie(b.inserted_at, b.sequence);
                                   });
    entries_.erase(oldest);
  }
}

std::size_t SemanticCache::evict_expired(VirtualInstant now) {
  std::lock_guard lock(mu_);
  if (config_.ttl == kForever) return 0;
  const std::size_t before = entries_.size();
  std::erase_if(entries_, [&](const SemanticEntry& e) { return now - e.inserted_at > config_.ttl; });
  return before - entries_.size();
}

std::size_t SemanticCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<SemanticEntry> SemanticCache::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

}  // namespace cachelab
