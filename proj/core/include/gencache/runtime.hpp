#ifndef GENCACHE_RUNTIME_HPP
#define GENCACHE_RUNTIME_HPP

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "gencache/cache_store.hpp"
#include "gencache/clustering.hpp"
#include "gencache/codegen.hpp"
#include "gencache/embedding.hpp"
#include "gencache/llm.hpp"
#include "gencache/prompt.hpp"

namespace gencache {

enum class ServedFrom { kCache, kLlm };

std::string_view to_string(ServedFrom s) noexcept;

struct RequestTimings {
  double embed_ms = 0;
  double cluster_search_ms = 0;
  double regex_validate_ms = 0;
  double program_exec_ms = 0;
  double llm_ms = 0;
  double db_insert_ms = 0;

  double total_ms() const noexcept {
    return embed_ms + cluster_search_ms + regex_validate_ms + program_exec_ms + llm_ms + db_insert_ms;
  }
};

struct RequestTokens {
  long long spent_input = 0;
  long long spent_output = 0;
  long long saved_estimate = 0;
};

struct RequestOutcome {
  std::string request_id;
  std::string response_text;
  ServedFrom served_from = ServedFrom::kLlm;
  std::optional<ClusterId> cluster_id;
  RequestTimings timings;
  RequestTokens tokens;
};

/// Cumulative counters at one point of the request stream.
struct RatioSample {
  std::uint64_t requests = 0;
  std::uint64_t codegen_llm_calls = 0;
  std::uint64_t hits = 0;
};

struct Metrics {
  std::uint64_t requests = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t codegen_llm_calls = 0;  // codegen and validator calls
  std::uint64_t codegen_attempts = 0;
  std::uint64_t codegen_accepted = 0;
  long long tokens_spent_input = 0;
  long long tokens_spent_output = 0;
  long long tokens_saved_input = 0;
  long long tokens_saved_output = 0;
  std::uint64_t feedback_deletions = 0;
  std::uint64_t evictions = 0;
  // Taken after the first request and every `series_window` requests.
  std::vector<RatioSample> ratio_samples;
};

/// Sentinel for a cost ratio with no hits yet.
inline constexpr double kRatioSentinel = std::numeric_limits<double>::infinity();

/// Cumulative codegen calls / cumulative hits at each sample whose request
/// count is 1 or a multiple of `window`. kRatioSentinel when hits are zero.
std::vector<double> cost_ratio_series(const Metrics& metrics, std::size_t window = 100);

struct RuntimeConfig {
  ClusterThresholds thresholds{};
  CodegenConfig codegen{};
  CacheStoreConfig cache{};
  std::size_t workers = 2;
  std::size_t series_window = 100;
  std::size_t request_log_capacity = 1 << 16;
  // Run generation inline after the request instead of on the worker pool.
  bool synchronous_codegen = false;
};

enum class FeedbackStatus { kApplied, kIgnored, kUnknownRequest };

/// The cache pipeline: serve from a cluster's program when one applies,
/// otherwise call the backend, store the exemplar and schedule program
/// generation for the cluster in the background.
class Runtime {
 public:
  Runtime(RuntimeConfig config, std::shared_ptr<const Embedder> embedder, std::shared_ptr<LlmBackend> codegen,
          std::shared_ptr<LlmBackend> validator);
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  /// Backend failures on the miss path propagate (TransportError); cache-path
  /// failures fall back to the backend.
  RequestOutcome handle_request(PromptRecord prompt, LlmBackend& backend);
  /// Same, with explicit chat messages sent to the backend on a miss.
  RequestOutcome handle_request(PromptRecord prompt, const std::vector<ChatMessage>& messages, LlmBackend& backend);

  FeedbackStatus record_feedback(std::string_view request_id, bool valid, std::string_view reason = {});

  Metrics metrics() const;
  std::vector<ClusterSummary> clusters() const;

  /// Blocks until no generation task is queued or running.
  void wait_idle();
  /// Drains queued tasks and stops the workers. Idempotent.
  void shutdown();

  /// Writes clusters and cache entries under `dir`. Call with no requests in
  /// flight.
  void snapshot(const std::filesystem::path& dir);
  /// Replaces the state with the snapshot in `dir`. Throws
  /// std::runtime_error (state untouched) on corrupt input.
  void restore(const std::filesystem::path& dir);

  ClusterStore& cluster_store() noexcept { return clusters_; }
  CacheStore& cache_store() noexcept { return cache_; }
  const RuntimeConfig& config() const noexcept { return config_; }
  const Embedder& embedder() const noexcept { return *embedder_; }

 private:
  struct LogEntry {
    ServedFrom served_from;
    std::optional<ClusterId> cluster_id;
    std::uint64_t generation = 0;
    std::string prompt_text;
    std::string response_text;
  };

  RequestOutcome handle(PromptRecord prompt, const std::vector<ChatMessage>* messages, LlmBackend& backend);
  void maybe_schedule(ClusterId id);
  void run_generation(ClusterId id);
  void worker_loop();
  void remember(const std::string& id, LogEntry entry);
  void sample_locked();

  RuntimeConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<LlmBackend> codegen_;
  std::shared_ptr<LlmBackend> validator_;
  ClusterStore clusters_;
  CacheStore cache_;

  mutable std::mutex metrics_mutex_;
  Metrics metrics_;

  std::mutex log_mutex_;
  std::unordered_map<std::string, LogEntry> log_;
  std::deque<std::string> log_order_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<ClusterId> queue_;
  std::set<ClusterId> pending_;  // queued or running
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

/// UUID-shaped random identifier.
std::string generate_request_id();

}  // namespace gencache

#endif  // GENCACHE_RUNTIME_HPP
