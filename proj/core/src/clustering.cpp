#include "gencache/clustering.hpp"

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace gencache {

void ClusterThresholds::validate() const {
  if (!(t_prompt > 0.0 && t_prompt <= 1.0)) throw std::invalid_argument("t_prompt must be in (0,1]");
  if (!(t_response > 0.0 && t_response <= 1.0)) throw std::invalid_argument("t_response must be in (0,1]");
}

namespace {

void accumulate(Embedding& sum, const Embedding& e) {
  if (sum.dims() != e.dims()) throw std::invalid_argument("embedding dimension mismatch");
  for (std::size_t i = 0; i < e.values.size(); ++i) sum.values[i] += e.values[i];
}

Embedding normalized_copy(const Embedding& sum) {
  Embedding c = sum;
  normalize(c);
  return c;
}

}  // namespace

Cluster::Cluster(ClusterId id, std::size_t capacity, Exemplar seed)
    : id_(id),
      capacity_(std::max<std::size_t>(capacity, 1)),
      response_kind_(seed.response.kind()),
      prompt_sum_(seed.prompt_embedding.dims()) {
  for (const auto& e : seed.response_embeddings) response_sums_.emplace_back(e.dims());
  accumulate(prompt_sum_, seed.prompt_embedding);
  for (std::size_t j = 0; j < response_sums_.size(); ++j) accumulate(response_sums_[j], seed.response_embeddings[j]);
  exemplars_.push_back(std::move(seed));
  refresh_centroids();
}

bool Cluster::add_exemplar(Exemplar exemplar) {
  if (exemplar.response.kind() != response_kind_ || exemplar.response_embeddings.size() != response_sums_.size()) {
    throw std::invalid_argument("exemplar response shape does not match cluster " + std::to_string(id_));
  }
  if (sealed()) return false;
  accumulate(prompt_sum_, exemplar.prompt_embedding);
  for (std::size_t j = 0; j < response_sums_.size(); ++j) {
    accumulate(response_sums_[j], exemplar.response_embeddings[j]);
  }
  exemplars_.push_back(std::move(exemplar));
  refresh_centroids();
  return true;
}

// The mean and the sum point the same way, so normalizing the running sum
// gives the normalized mean.
void Cluster::refresh_centroids() {
  prompt_centroid_ = normalized_copy(prompt_sum_);
  response_centroids_.clear();
  for (const auto& s : response_sums_) response_centroids_.push_back(normalized_copy(s));
}

double prompt_similarity(const Cluster& cluster, const Embedding& prompt_embedding) {
  return cosine(prompt_embedding, cluster.prompt_centroid());
}

std::optional<double> response_similarity(const Cluster& cluster, std::span<const Embedding> response_embeddings) {
  const auto& centroids = cluster.response_centroids();
  if (response_embeddings.size() != centroids.size()) return std::nullopt;
  if (centroids.empty()) return 1.0;  // two empty documents have identical shape
  double sum = 0.0;
  for (std::size_t j = 0; j < centroids.size(); ++j) sum += cosine(response_embeddings[j], centroids[j]);
  return sum / static_cast<double>(centroids.size());
}

// ---------------------------------------------------------------------------

ClusterStore::ClusterStore(std::size_t nu, ClusterThresholds thresholds) : nu_(nu), thresholds_(thresholds) {
  thresholds_.validate();
}

Cluster* ClusterStore::find(ClusterId id) {
  auto it = std::lower_bound(clusters_.begin(), clusters_.end(), id,
                             [](const Cluster& c, ClusterId v) { return c.id() < v; });
  return (it != clusters_.end() && it->id() == id) ? &*it : nullptr;
}

const Cluster* ClusterStore::find(ClusterId id) const {
  return const_cast<ClusterStore*>(this)->find(id);
}

Assignment ClusterStore::assign(Exemplar exemplar) {
  std::unique_lock lock(mutex_);
  Assignment best;
  bool found = false;
  double best_score = 0.0;
  for (const auto& c : clusters_) {
    double sp = prompt_similarity(c, exemplar.prompt_embedding);
    if (!(sp > thresholds_.t_prompt)) continue;
    if (c.response_kind() != exemplar.response.kind()) continue;
    auto sr = response_similarity(c, exemplar.response_embeddings);
    if (!sr || !(*sr > thresholds_.t_response)) continue;
    double score = sp + *sr;
    // Clusters are in id order, so strict > keeps the lowest id on ties.
    if (!found || score > best_score) {
      found = true;
      best_score = score;
      best.cluster_id = c.id();
      best.s_p = sp;
      best.s_r = *sr;
    }
  }

  if (!found) {
    Assignment created;
    created.cluster_id = next_id_++;
    created.created = true;
    created.stored = true;
    created.s_p = 1.0;
    created.s_r = 1.0;
    clusters_.emplace_back(created.cluster_id, 3 * nu_, std::move(exemplar));
    return created;
  }
  best.stored = find(best.cluster_id)->add_exemplar(std::move(exemplar));
  return best;
}

std::optional<ClusterId> ClusterStore::nearest_by_prompt(const Embedding& prompt_embedding, double t_prompt) const {
  std::shared_lock lock(mutex_);
  std::optional<ClusterId> best;
  double best_sp = 0.0;
  for (const auto& c : clusters_) {
    double sp = prompt_similarity(c, prompt_embedding);
    if (!best || sp > best_sp) {
      best = c.id();
      best_sp = sp;
    }
  }
  if (best && best_sp > t_prompt) return best;
  return std::nullopt;
}

std::size_t ClusterStore::size() const {
  std::shared_lock lock(mutex_);
  return clusters_.size();
}

std::optional<Cluster> ClusterStore::get(ClusterId id) const {
  std::shared_lock lock(mutex_);
  const Cluster* c = find(id);
  if (!c) return std::nullopt;
  return *c;
}

namespace {

ClusterSummary summarize(const Cluster& c) {
  return {c.id(), c.size(), c.sealed(), c.has_cache, c.retries_used, c.response_kind(), c.response_arity()};
}

}  // namespace

std::vector<ClusterSummary> ClusterStore::summaries() const {
  std::shared_lock lock(mutex_);
  std::vector<ClusterSummary> out;
  out.reserve(clusters_.size());
  for (const auto& c : clusters_) out.push_back(summarize(c));
  return out;
}

std::optional<ClusterSummary> ClusterStore::summary(ClusterId id) const {
  std::shared_lock lock(mutex_);
  const Cluster* c = find(id);
  if (!c) return std::nullopt;
  return summarize(*c);
}

bool ClusterStore::try_consume_retry(ClusterId id, int rho) {
  std::unique_lock lock(mutex_);
  Cluster* c = find(id);
  if (!c || c->retries_used >= rho) return false;
  ++c->retries_used;
  return true;
}

void ClusterStore::set_has_cache(ClusterId id, bool has_cache) {
  std::unique_lock lock(mutex_);
  if (Cluster* c = find(id)) c->has_cache = has_cache;
}

void ClusterStore::set_feedback_note(ClusterId id, std::string note) {
  std::unique_lock lock(mutex_);
  if (Cluster* c = find(id)) c->feedback_note = std::move(note);
}

std::string ClusterStore::take_feedback_note(ClusterId id) {
  std::unique_lock lock(mutex_);
  Cluster* c = find(id);
  if (!c) return {};
  return std::exchange(c->feedback_note, {});
}

void ClusterStore::load(std::vector<Cluster> clusters) {
  for (std::size_t i = 1; i < clusters.size(); ++i) {
    if (clusters[i].id() <= clusters[i - 1].id()) throw std::invalid_argument("cluster ids must be strictly increasing");
  }
  std::unique_lock lock(mutex_);
  clusters_ = std::move(clusters);
  next_id_ = clusters_.empty() ? 0 : clusters_.back().id() + 1;
}

std::vector<Cluster> ClusterStore::clusters() const {
  std::shared_lock lock(mutex_);
  return clusters_;
}

}  // namespace gencache
