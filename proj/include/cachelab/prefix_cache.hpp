#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cachelab/core.hpp"

namespace cachelab {

using UserId = std::string;
using NamespaceId = std::uint32_t;

/// Namespace of every block when isolation is off.
inline constexpr NamespaceId kSharedNamespace = 0;

struct Digest128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  auto operator<=>(const Digest128&) const = default;
};

/// Chain digest of (parent digest, block tokens).
Digest128 chain_digest(const Digest128& parent, std::span<const TokenId> block);

struct BlockKey {
  Digest128 chain_hash;
  NamespaceId ns = kSharedNamespace;
  auto operator<=>(const BlockKey&) const = default;
};

struct BlockKeyHash {
  std::size_t operator()(const BlockKey& k) const noexcept;
};

struct CacheEntry {
  BlockKey block_key;
  VirtualInstant last_access;
  VirtualInstant inserted_at;
  NamespaceId owner = kSharedNamespace;  ///< interned id of the inserting user
  std::size_t depth = 0;  ///< 0-based block index within its chain
  std::size_t children = 0;
  bool has_parent = false;
  Digest128 parent_hash;
  std::vector<TokenId> tokens;  ///< kept only in verify_tokens mode
};

enum class TtlMode { sliding, fixed_from_insert };

struct PrefixCacheConfig {
  std::size_t block_size = 16;
  std::size_t capacity_tokens = 1u << 24;
  VirtualDuration ttl = std::chrono::minutes(10);
  bool isolation = false;
  TtlMode ttl_mode = TtlMode::sliding;
  /// Compare stored block tokens on every match instead of trusting digests.
  bool verify_tokens = false;

  void validate() const;
};

struct PrefixCacheStats {
  std::size_t resident_tokens = 0;
  std::uint64_t insertions = 0;  ///< blocks created
  std::uint64_t evictions = 0;   ///< blocks removed by TTL or capacity
  std::uint64_t hits = 0;        ///< blocks matched by match_prefix
  std::uint64_t misses = 0;      ///< complete query blocks match_prefix could not match

  bool operator==(const PrefixCacheStats&) const = default;
};

/// Block-granular prefix-sharing KV-cache index. Only complete blocks are
/// cached; a block can match only if every block before it matched too.
class PrefixCache {
 public:
  explicit PrefixCache(PrefixCacheConfig config);

  /// Caches every complete block of `seq`; returns the number of new blocks.
  std::size_t insert_sequence(const TokenSeq& seq, const UserId& user, VirtualInstant now);

  /// Longest run of leading cached, unexpired blocks; refreshes their last_access.
  std::size_t match_prefix(const TokenSeq& seq, const UserId& user, VirtualInstant now);

  /// Same as match_prefix without touching any state.
  std::size_t peek_prefix(const TokenSeq& seq, const UserId& user, VirtualInstant now) const;

  std::size_t evict_expired(VirtualInstant now);

  PrefixCacheStats stats() const;
  const PrefixCacheConfig& config() const { return config_; }
  std::size_t resident_blocks() const;

  /// Interned id for a user (the key namespace when isolation is on).
  NamespaceId user_id(const UserId& user);

 private:
  using OrderKey = std::tuple<VirtualInstant, std::int64_t /*-depth*/, BlockKey>;

  NamespaceId intern_locked(const UserId& user);
  NamespaceId ns_for(NamespaceId owner) const;
  bool expired(const CacheEntry& e, VirtualInstant now) const;
  const CacheEntry* find_block(const Digest128& parent, bool has_parent,
                               std::span<const TokenId> block, NamespaceId ns,
                               VirtualInstant now, Digest128& digest) const;
  std::size_t peek_locked(const TokenSeq& seq, NamespaceId ns, VirtualInstant now) const;
  void touch(CacheEntry& e, VirtualInstant now);
  void erase_entry(const BlockKey& key);
  void enforce_capacity();
  std::size_t evict_expired_locked(VirtualInstant now);

  PrefixCacheConfig config_;
  mutable std::mutex mu_;
  std::unordered_map<BlockKey, CacheEntry, BlockKeyHash> entries_;
  std::set<OrderKey> lru_;  // oldest access first, deepest first among ties
  std::unordered_map<UserId, NamespaceId> users_;
  PrefixCacheStats stats_;
};

}  // namespace cachelab
