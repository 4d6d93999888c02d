#ifndef GENCACHE_CLUSTERING_HPP
#define GENCACHE_CLUSTERING_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "gencache/embedding.hpp"
#include "gencache/prompt.hpp"

namespace gencache {

using ClusterId = std::uint64_t;

/// T^p / T^r. Assignment requires both similarities to strictly exceed them.
struct ClusterThresholds {
  double t_prompt = 0.8;
  double t_response = 0.75;

  void validate() const;
};

/// A group of exemplars whose prompts and responses look alike.
///
/// Centroids are kept as running sums and re-normalized after every accepted
/// exemplar, so `prompt_centroid()` is the unit-normalized mean of member
/// prompt embeddings. Once the cluster holds `capacity()` exemplars (3 nu) it
/// is sealed and further exemplars are dropped.
class Cluster {
 public:
  Cluster(ClusterId id, std::size_t capacity, Exemplar seed);

  ClusterId id() const noexcept { return id_; }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<Exemplar>& exemplars() const noexcept { return exemplars_; }
  std::size_t size() const noexcept { return exemplars_.size(); }
  bool sealed() const noexcept { return exemplars_.size() >= capacity_; }

  const Embedding& prompt_centroid() const noexcept { return prompt_centroid_; }
  const std::vector<Embedding>& response_centroids() const noexcept { return response_centroids_; }
  ResponseKind response_kind() const noexcept { return response_kind_; }
  std::size_t response_arity() const noexcept { return response_centroids_.size(); }

  int retries_used = 0;
  bool has_cache = false;
  // Reason attached by negative feedback; fed to the next generation attempt.
  std::string feedback_note;

  /// Appends `exemplar` and updates the centroids. Returns false (and leaves
  /// the cluster unchanged) when sealed. Throws std::invalid_argument when the
  /// response shape differs from the cluster's.
  bool add_exemplar(Exemplar exemplar);

 private:
  void refresh_centroids();

  ClusterId id_;
  std::size_t capacity_;
  std::vector<Exemplar> exemplars_;
  ResponseKind response_kind_;
  Embedding prompt_sum_;
  std::vector<Embedding> response_sums_;
  Embedding prompt_centroid_;
  std::vector<Embedding> response_centroids_;
};

/// s^p: cosine between `prompt_embedding` and the prompt centroid.
double prompt_similarity(const Cluster& cluster, const Embedding& prompt_embedding);

/// s^r: mean per-slot cosine against the response centroids, or nullopt when
/// the number of values differs from the cluster's arity.
std::optional<double> response_similarity(const Cluster& cluster, std::span<const Embedding> response_embeddings);

struct Assignment {
  ClusterId cluster_id = 0;
  bool created = false;
  bool stored = false;  // false when the chosen cluster was sealed
  double s_p = 0.0;
  double s_r = 0.0;
};

/// Value summary used by inspection endpoints.
struct ClusterSummary {
  ClusterId id = 0;
  std::size_t size = 0;
  bool sealed = false;
  bool has_cache = false;
  int retries_used = 0;
  ResponseKind response_kind = ResponseKind::kPlain;
  std::size_t response_arity = 0;
};

/// Online cluster database. Reads take a shared lock; mutations are
/// serialized. Clusters are never removed and stay sorted by id.
class ClusterStore {
 public:
  ClusterStore(std::size_t nu, ClusterThresholds thresholds);

  ClusterStore(const ClusterStore&) = delete;
  ClusterStore& operator=(const ClusterStore&) = delete;

  std::size_t nu() const noexcept { return nu_; }
  const ClusterThresholds& thresholds() const noexcept { return thresholds_; }

  /// Dual-threshold argmax assignment; lowest id wins ties. Creates a new
  /// cluster when no candidate passes both thresholds.
  Assignment assign(Exemplar exemplar);

  /// Serve-path lookup: the cluster with the highest s^p if it exceeds
  /// `t_prompt`.
  std::optional<ClusterId> nearest_by_prompt(const Embedding& prompt_embedding, double t_prompt) const;

  std::size_t size() const;
  std::optional<Cluster> get(ClusterId id) const;
  std::vector<ClusterSummary> summaries() const;
  /// Cheap per-cluster view (no exemplar copy).
  std::optional<ClusterSummary> summary(ClusterId id) const;

  /// Consumes one generation attempt if fewer than `rho` have been used.
  bool try_consume_retry(ClusterId id, int rho);
  void set_has_cache(ClusterId id, bool has_cache);
  void set_feedback_note(ClusterId id, std::string note);
  /// Returns and clears the feedback note.
  std::string take_feedback_note(ClusterId id);

  /// Rebuilds a store from persisted clusters (centroids recomputed).
  /// Ids must be strictly increasing.
  void load(std::vector<Cluster> clusters);
  std::vector<Cluster> clusters() const;

 private:
  Cluster* find(ClusterId id);
  const Cluster* find(ClusterId id) const;

  std::size_t nu_;
  ClusterThresholds thresholds_;
  mutable std::shared_mutex mutex_;
  std::vector<Cluster> clusters_;
  ClusterId next_id_ = 0;
};

}  // namespace gencache

#endif  // GENCACHE_CLUSTERING_HPP
