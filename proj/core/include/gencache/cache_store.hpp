#ifndef GENCACHE_CACHE_STORE_HPP
#define GENCACHE_CACHE_STORE_HPP

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gencache/clustering.hpp"
#include "gencache/program.hpp"

namespace gencache {

struct CacheStoreConfig {
  std::size_t max_entries = 4096;
  std::size_t max_total_bytes = 64ull * 1024 * 1024;

  void validate() const;
};

struct CacheEntry {
  ClusterId cluster_id = 0;
  CompiledProgram program;
  std::chrono::system_clock::time_point created_at{};
  std::uint64_t last_used_at = 0;  // monotonic counter, not wall-clock
  std::uint64_t hits = 0;
  std::size_t size_bytes = 0;
  std::uint64_t generation = 0;  // distinguishes successive programs of one cluster
};

/// Program cache keyed by cluster id with LRU eviction on entry count and
/// total bytes. Eviction only drops programs; clusters are owned elsewhere.
class CacheStore {
 public:
  explicit CacheStore(CacheStoreConfig config = {});

  /// Inserts or replaces; returns the clusters whose entries were evicted.
  std::vector<ClusterId> put(ClusterId cluster_id, CompiledProgram program,
                             std::chrono::system_clock::time_point created_at = std::chrono::system_clock::now());

  /// Bumps recency and the hit counter.
  std::optional<CacheEntry> get(ClusterId cluster_id);
  /// No recency update.
  std::optional<CacheEntry> peek(ClusterId cluster_id) const;

  bool delete_for_feedback(ClusterId cluster_id);
  /// Deletes only if the entry is still the given generation.
  bool delete_generation(ClusterId cluster_id, std::uint64_t generation);

  std::size_t size() const;
  std::size_t total_bytes() const;
  const CacheStoreConfig& config() const noexcept { return config_; }

  /// Entries from least to most recently used.
  std::vector<CacheEntry> entries_lru_order() const;
  void clear();

 private:
  using List = std::list<CacheEntry>;

  std::vector<ClusterId> evict_locked();

  CacheStoreConfig config_;
  mutable std::mutex mutex_;
  List lru_;  // front = least recently used
  std::unordered_map<ClusterId, List::iterator> index_;
  std::size_t total_bytes_ = 0;
  std::uint64_t clock_ = 0;
  std::uint64_t next_generation_ = 1;
};

}  // namespace gencache

#endif  // GENCACHE_CACHE_STORE_HPP
