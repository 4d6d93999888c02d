#ifndef GENCACHE_SRC_PERSISTENCE_HPP
#define GENCACHE_SRC_PERSISTENCE_HPP

#include <chrono>
#include <filesystem>
#include <vector>

#include "gencache/cache_store.hpp"
#include "gencache/clustering.hpp"
#include "gencache/embedding.hpp"

namespace gencache::detail {

struct LoadedEntry {
  ClusterId cluster_id;
  CompiledProgram program;
  std::chrono::system_clock::time_point created_at;
};

struct LoadedState {
  std::vector<Cluster> clusters;
  std::vector<LoadedEntry> entries;
};

/// Layout:
///   {dir}/clusters.jsonl              one cluster per line
///   {dir}/cache/index                 one entry per line
///   {dir}/cache/programs/{id}.prog    serialized program source
void write_snapshot(const std::filesystem::path& dir, const std::vector<Cluster>& clusters,
                    const std::vector<CacheEntry>& entries);

/// Re-embeds exemplars and recompiles programs. Throws std::runtime_error on
/// any inconsistency. A missing directory is an empty state.
LoadedState read_snapshot(const std::filesystem::path& dir, const Embedder& embedder, std::size_t nu,
                          std::size_t max_program_bytes);

}  // namespace gencache::detail

#endif  // GENCACHE_SRC_PERSISTENCE_HPP
