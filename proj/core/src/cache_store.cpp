#include "gencache/cache_store.hpp"

#include <stdexcept>

namespace gencache {

void CacheStoreConfig::validate() const {
  if (max_entries == 0) throw std::invalid_argument("cache max_entries must be positive");
  if (max_total_bytes == 0) throw std::invalid_argument("cache max_total_bytes must be positive");
}

CacheStore::CacheStore(CacheStoreConfig config) : config_(config) { config_.validate(); }

std::vector<ClusterId> CacheStore::put(ClusterId cluster_id, CompiledProgram program,
                                       std::chrono::system_clock::time_point created_at) {
  std::lock_guard lock(mutex_);
  if (auto it = index_.find(cluster_id); it != index_.end()) {
    total_bytes_ -= it->second->size_bytes;
    lru_.erase(it->second);
    index_.erase(it);
  }
  std::size_t size = program.size_bytes();
  lru_.push_back(CacheEntry{cluster_id, std::move(program), created_at, ++clock_, 0, size, next_generation_++});
  index_[cluster_id] = std::prev(lru_.end());
  total_bytes_ += size;
  return evict_locked();
}

// Least recently used first. The newest entry goes last, and only when it
// alone exceeds the byte budget.
std::vector<ClusterId> CacheStore::evict_locked() {
  std::vector<ClusterId> evicted;
  while (lru_.size() > config_.max_entries || (total_bytes_ > config_.max_total_bytes && lru_.size() > 1)) {
    auto& victim = lru_.front();
    evicted.push_back(victim.cluster_id);
    total_bytes_ -= victim.size_bytes;
    index_.erase(victim.cluster_id);
    lru_.pop_front();
  }
  if (total_bytes_ > config_.max_total_bytes) {
    evicted.push_back(lru_.front().cluster_id);
    index_.erase(lru_.front().cluster_id);
    lru_.clear();
    total_bytes_ = 0;
  }
  return evicted;
}

std::optional<CacheEntry> CacheStore::get(ClusterId cluster_id) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(cluster_id);
  if (it == index_.end()) return std::nullopt;
  lru_.splice(lru_.end(), lru_, it->second);
  auto& e = *it->second;
  e.last_used_at = ++clock_;
  ++e.hits;
  return e;
}

std::optional<CacheEntry> CacheStore::peek(ClusterId cluster_id) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(cluster_id);
  if (it == index_.end()) return std::nullopt;
  return *it->second;
}

bool CacheStore::delete_for_feedback(ClusterId cluster_id) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(cluster_id);
  if (it == index_.end()) return false;
  total_bytes_ -= it->second->size_bytes;
  lru_.erase(it->second);
  index_.erase(it);
  return true;
}

bool CacheStore::delete_generation(ClusterId cluster_id, std::uint64_t generation) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(cluster_id);
  if (it == index_.end() || it->second->generation != generation) return false;
  total_bytes_ -= it->second->size_bytes;
  lru_.erase(it->second);
  index_.erase(it);
  return true;
}

std::size_t CacheStore::size() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

std::size_t CacheStore::total_bytes() const {
  std::lock_guard lock(mutex_);
  return total_bytes_;
}

std::vector<CacheEntry> CacheStore::entries_lru_order() const {
  std::lock_guard lock(mutex_);
  return {lru_.begin(), lru_.end()};
}

void CacheStore::clear() {
  std::lock_guard lock(mutex_);
  lru_.clear();
  index_.clear();
  total_bytes_ = 0;
}

}  // namespace gencache
