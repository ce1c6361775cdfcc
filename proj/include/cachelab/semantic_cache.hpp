#pragma once

#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cachelab/core.hpp"

namespace cachelab {

inline constexpr std::size_t kEmbeddingDim = 256;

/// Unit-norm hashed character-trigram embedding (zero for texts under 3 chars).
struct EmbeddingVector {
  std::vector<double> values;

  bool is_zero() const;
  bool operator==(const EmbeddingVector&) const = default;
};

EmbeddingVector embed(std::string_view text, std::size_t dim = kEmbeddingDim);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct SemanticEntry {
  std::string query_text;
  EmbeddingVector embedding;
  std::string response;
  VirtualInstant inserted_at;
  std::string owner;
  std::size_t sequence = 0;  ///< insertion order, breaks inserted_at ties
};

struct SemanticCacheConfig {
  double threshold = 0.9;
  std::size_t capacity_entries = 100000;
  VirtualDuration ttl = std::chrono::hours(24 * 7);
  /// Entries are only visible to the user who inserted them.
  bool isolation = false;
  std::size_t dim = kEmbeddingDim;

  void validate() const;
};

struct SemanticHit {
  std::string response;
  double similarity = 0.0;
  std::string owner;
  std::string query_text;
};

/// Threshold response cache: a lookup hits the most similar cached query when
/// that similarity reaches the threshold.
class SemanticCache {
 public:
  explicit SemanticCache(SemanticCacheConfig config);

  std::optional<SemanticHit> lookup(std::string_view query, VirtualInstant now,
                                    const std::string& user = "") const;
  std::optional<SemanticHit> lookup_embedded(const EmbeddingVector& q, VirtualInstant now,
                                             const std::string& user = "") const;

  /// Re-inserting an existing query text replaces that entry.
  void insert(std::string_view query, std::string_view response, VirtualInstant now,
              const std::string& user = "");

  std::size_t evict_expired(VirtualInstant now);
  std::size_t size() const;
  std::vector<SemanticEntry> entries() const;
  const SemanticCacheConfig& config() const { return config_; }

 private:
  bool visible(const SemanticEntry& e, VirtualInstant now, const std::string& user) const;

  SemanticCacheConfig config_;
  mutable std::mutex mu_;
  std::vector<SemanticEntry> entries_;
  std::size_t next_sequence_ = 0;
};

}  // namespace cachelab
