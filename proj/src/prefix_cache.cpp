#include "cachelab/prefix_cache.hpp"

#include <algorithm>
#include <cassert>

namespace cachelab {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

}  // namespace

Digest128 chain_digest(const Digest128& parent, std::span<const TokenId> block) {
  // Two independent 64-bit lanes seeded from the parent digest.
  std::uint64_t a = parent.hi ^ 0x243f6a8885a308d3ULL;
  std::uint64_t b = parent.lo ^ 0x13198a2e03707344ULL;
  for (TokenId t : block) {
    a = mix64(a ^ t) + 0x9e3779b97f4a7c15ULL;
    b = mix64(b + t * 0xd6e8feb86659fd93ULL) ^ 0xa0761d6478bd642fULL;
  }
  a = mix64(a ^ block.size());
  b = mix64(b ^ (block.size() << 1));
  return Digest128{a, b};
}

std::size_t BlockKeyHash::operator()(const BlockKey& k) const noexcept {
  return static_cast<std::size_t>(k.chain_hash.lo ^ (k.chain_hash.hi * 31) ^
                                  (static_cast<std::uint64_t>(k.ns) << 17));
}

void PrefixCacheConfig::validate() const {
  if (block_size < 1) throw DomainError("prefix cache block_size must be >= 1");
  if (capacity_tokens < block_size)
    throw DomainError("prefix cache capacity_tokens must be >= block_size");
  if (ttl < VirtualDuration::zero()) throw DomainError("prefix cache ttl must be >= 0");
}

PrefixCache::PrefixCache(PrefixCacheConfig config) : config_(config) {
  config_.validate();
  users_.emplace("", kSharedNamespace);
}

NamespaceId PrefixCache::user_id(const UserId& user) {
  std::lock_guard lock(mu_);
  return intern_locked(user);
}

NamespaceId PrefixCache::intern_locked(const UserId& user) {
  auto [it, inserted] = users_.try_emplace(user, static_cast<NamespaceId>(users_.size()));
  return it->second;
}

NamespaceId PrefixCache::ns_for(NamespaceId owner) const {
  return config_.isolation ? owner : kSharedNamespace;
}

bool PrefixCache::expired(const CacheEntry& e, VirtualInstant now) const {
  if (config_.ttl == kForever) return false;
  const VirtualInstant ref =
      config_.ttl_mode == TtlMode::sliding ? e.last_access : e.inserted_at;
  return now - ref > config_.ttl;
}

const CacheEntry* PrefixCache::find_block(const Digest128& parent, bool has_parent,
                                          std::span<const TokenId> block, NamespaceId ns,
                                          VirtualInstant now, Digest128& digest) const {
  digest = chain_digest(has_parent ? parent : Digest128{}, block);
  const auto it = entries_.find(BlockKey{digest, ns});
  if (it == entries_.end() || expired(it->second, now)) return nullptr;
  if (config_.verify_tokens &&
      !std::equal(block.begin(), block.end(), it->second.tokens.begin(), it->second.tokens.end()))
    return nullptr;
  return &it->second;
}

std::size_t PrefixCache::peek_locked(const TokenSeq& seq, NamespaceId ns,
                                     VirtualInstant now) const {
  const std::size_t B = config_.block_size;
  const std::size_t blocks = seq.size() / B;
  const std::span<const TokenId> tokens(seq.tokens);
  Digest128 parent{};
  std::size_t m = 0;
  for (; m < blocks; ++m) {
    Digest128 digest;
    if (find_block(parent, m > 0, tokens.subspan(m * B, B), ns, now, digest) == nullptr) break;
    parent = digest;
  }
  return m;
}

void PrefixCache::touch(CacheEntry& e, VirtualInstant now) {
  lru_.erase(OrderKey{e.last_access, -static_cast<std::int64_t>(e.depth), e.block_key});
  e.last_access = std::max(e.last_access, now);
  lru_.insert(OrderKey{e.last_access, -static_cast<std::int64_t>(e.depth), e.block_key});
}

void PrefixCache::erase_entry(const BlockKey& key) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return;
  const CacheEntry& e = it->second;
  lru_.erase(OrderKey{e.last_access, -static_cast<std::int64_t>(e.depth), e.block_key});
  if (e.has_parent) {
    const auto parent = entries_.find(BlockKey{e.parent_hash, e.block_key.ns});
    if (parent != entries_.end() && parent->second.children > 0) --parent->second.children;
  }
  entries_.erase(it);
  stats_.resident_tokens -= config_.block_size;
  ++stats_.evictions;
}

std::size_t PrefixCache::insert_sequence(const TokenSeq& seq, const UserId& user,
                                         VirtualInstant now) {
  std::lock_guard lock(mu_);
  const NamespaceId owner = intern_locked(user);
  const NamespaceId ns = ns_for(owner);
  const std::size_t B = config_.block_size;
  const std::size_t blocks = seq.size() / B;
  const std::span<const TokenId> tokens(seq.tokens);

  std::size_t created = 0;
  Digest128 parent{};
  for (std::size_t i = 0; i < blocks; ++i) {
    const auto block = tokens.subspan(i * B, B);
    const Digest128 digest = chain_digest(i > 0 ? parent : Digest128{}, block);
    const BlockKey key{digest, ns};
    auto it = entries_.find(key);
    if (it != entries_.end() && expired(it->second, now)) {
      // Purge stale chains with their suffixes before rebuilding this one.
      // Blocks already visited were unexpired at `now`, so they survive.
      evict_expired_locked(now);
      it = entries_.find(key);
    }
    if (it == entries_.end()) {
      CacheEntry e;
      e.block_key = key;
      e.last_access = now;
      e.inserted_at = now;
      e.owner = owner;
      e.depth = i;
      e.has_parent = i > 0;
      e.parent_hash = parent;
      if (config_.verify_tokens) e.tokens.assign(block.begin(), block.end());
      if (i > 0) {
        const auto p = entries_.find(BlockKey{parent, ns});
        if (p != entries_.end()) ++p->second.children;
      }
      lru_.insert(OrderKey{now, -static_cast<std::int64_t>(i), key});
      entries_.emplace(key, std::move(e));
      stats_.resident_tokens += B;
      ++stats_.insertions;
      ++created;
    } else {
      touch(it->second, now);
    }
    parent = digest;
  }
  enforce_capacity();
  return created;
}

std::size_t PrefixCache::match_prefix(const TokenSeq& seq, const UserId& user,
                                      VirtualInstant now) {
  std::lock_guard lock(mu_);
  const NamespaceId ns = ns_for(intern_locked(user));
  const std::size_t B = config_.block_size;
  const std::size_t blocks = seq.size() / B;
  const std::span<const TokenId> tokens(seq.tokens);
  Digest128 parent{};
  std::size_t m = 0;
  for (; m < blocks; ++m) {
    Digest128 digest;
    const CacheEntry* e = find_block(parent, m > 0, tokens.subspan(m * B, B), ns, now, digest);
    if (e == nullptr) break;
    touch(entries_.at(e->block_key), now);
    parent = digest;
  }
  stats_.hits += m;
  stats_.misses += blocks - m;
  return m;
}

std::size_t PrefixCache::peek_prefix(const TokenSeq& seq, const UserId& user,
                                     VirtualInstant now) const {
  std::lock_guard lock(mu_);
  const auto it = users_.find(user);
  const NamespaceId owner = it == users_.end() ? static_cast<NamespaceId>(-1) : it->second;
  return peek_locked(seq, ns_for(owner), now);
}

std::size_t PrefixCache::evict_expired(VirtualInstant now) {
  std::lock_guard lock(mu_);
  return evict_expired_locked(now);
}

std::size_t PrefixCache::evict_expired_locked(VirtualInstant now) {
  if (config_.ttl == kForever) return 0;
  const std::uint64_t before = stats_.evictions;
  if (config_.ttl_mode == TtlMode::sliding) {
    // Parents are touched whenever a child is, so the oldest entry is always a leaf.
    while (!lru_.empty()) {
      const BlockKey key = std::get<2>(*lru_.begin());
      if (!expired(entries_.at(key), now)) break;
      erase_entry(key);
    }
  } else {
    std::vector<const CacheEntry*> order;
    order.reserve(entries_.size());
    for (const auto& [k, e] : entries_) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const CacheEntry* a, const CacheEntry* b) {
      return std::tie(a->depth, a->block_key) < std::tie(b->depth, b->block_key);
    });
    std::vector<BlockKey> doomed;
    std::set<BlockKey> doomed_set;
    for (const CacheEntry* e : order) {
      const bool orphan = e->has_parent &&
                          doomed_set.count(BlockKey{e->parent_hash, e->block_key.ns}) > 0;
      if (orphan || expired(*e, now)) {
        doomed.push_back(e->block_key);
        doomed_set.insert(e->block_key);
      }
    }
    // deepest first keeps child counts consistent
    for (auto it = doomed.rbegin(); it != doomed.rend(); ++it) erase_entry(*it);
  }
  return static_cast<std::size_t>(stats_.evictions - before);
}

void PrefixCache::enforce_capacity() {
  while (stats_.resident_tokens > config_.capacity_tokens && !lru_.empty()) {
    const BlockKey key = std::get<2>(*lru_.begin());
    assert(entries_.at(key).children == 0);
    erase_entry(key);
  }
}

PrefixCacheStats PrefixCache::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::size_t PrefixCache::resident_blocks() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace cachelab
