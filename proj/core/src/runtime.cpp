#include "gencache/runtime.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "persistence.hpp"

namespace gencache {

std::string_view to_string(ServedFrom s) noexcept { return s == ServedFrom::kCache ? "cache" : "llm"; }

std::vector<double> cost_ratio_series(const Metrics& metrics, std::size_t window) {
  std::vector<double> out;
  for (const auto& s : metrics.ratio_samples) {
    if (s.requests != 1 && (window == 0 || s.requests % window != 0)) continue;
    out.push_back(s.hits == 0 ? kRatioSentinel
                              : static_cast<double>(s.codegen_llm_calls) / static_cast<double>(s.hits));
  }
  return out;
}

std::string generate_request_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::uint64_t hi = rng(), lo = rng();
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;  // version 4
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;  // variant
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xffff), static_cast<unsigned>(hi & 0xffff),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

Runtime::Runtime(RuntimeConfig config, std::shared_ptr<const Embedder> embedder, std::shared_ptr<LlmBackend> codegen,
                 std::shared_ptr<LlmBackend> validator)
    : config_(std::move(config)),
      embedder_(std::move(embedder)),
      codegen_(std::move(codegen)),
      validator_(std::move(validator)),
      clusters_(config_.codegen.nu, config_.thresholds),
      cache_(config_.cache) {
  if (!embedder_ || !codegen_ || !validator_) throw std::invalid_argument("runtime needs an embedder and backends");
  config_.codegen.validate();
  if (config_.workers == 0) config_.synchronous_codegen = true;
  if (!config_.synchronous_codegen) {
    for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
}

Runtime::~Runtime() { shutdown(); }

RequestOutcome Runtime::handle_request(PromptRecord prompt, LlmBackend& backend) {
  return handle(std::move(prompt), nullptr, backend);
}

RequestOutcome Runtime::handle_request(PromptRecord prompt, const std::vector<ChatMessage>& messages,
                                       LlmBackend& backend) {
  return handle(std::move(prompt), &messages, backend);
}

RequestOutcome Runtime::handle(PromptRecord prompt, const std::vector<ChatMessage>* messages, LlmBackend& backend) {
  RequestOutcome out;
  out.request_id = prompt.id.empty() ? generate_request_id() : prompt.id;
  prompt.id = out.request_id;

  auto t = Clock::now();
  std::optional<Embedding> embedding;
  try {
    embedding = embedder_->embed(prompt.full_text);
  } catch (const std::exception& e) {
    spdlog::warn("embedding failed for request {}: {}", out.request_id, e.what());
  }
  out.timings.embed_ms = ms_since(t);

  // Serve path: best cluster by prompt similarity, then its program if any.
  if (embedding) {
    t = Clock::now();
    auto nearest = clusters_.nearest_by_prompt(*embedding, config_.thresholds.t_prompt);
    std::optional<CacheEntry> entry;
    if (nearest) entry = cache_.peek(*nearest);
    out.timings.cluster_search_ms = ms_since(t);

    if (entry) {
      out.cluster_id = nearest;
      t = Clock::now();
      bool shape_ok = structural_match(entry->program, prompt.full_text);
      out.timings.regex_validate_ms = ms_since(t);
      if (shape_ok) {
        t = Clock::now();
        auto result = execute(entry->program, prompt.full_text, config_.codegen.exec_limits);
        auto summary = clusters_.summary(*nearest);
        bool ok = summary && sanity_check(result, summary->response_kind, summary->response_arity);
        out.timings.program_exec_ms = ms_since(t);
        if (ok) {
          cache_.get(*nearest);  // recency and hit count
          out.served_from = ServedFrom::kCache;
          out.response_text = serialize_response(result.response());
          out.tokens.saved_estimate = estimate_tokens(prompt.full_text) + estimate_tokens(out.response_text);
          remember(out.request_id, {ServedFrom::kCache, nearest, entry->generation, prompt.user_text,
                                    out.response_text});
          std::lock_guard lock(metrics_mutex_);
          ++metrics_.requests;
          ++metrics_.hits;
          metrics_.tokens_saved_input += estimate_tokens(prompt.full_text);
          metrics_.tokens_saved_output += estimate_tokens(out.response_text);
          sample_locked();
          return out;
        }
      }
    }
  }

  // Miss path.
  out.served_from = ServedFrom::kLlm;
  out.timings.program_exec_ms = 0.0;
  t = Clock::now();
  std::vector<ChatMessage> default_messages;
  if (!messages) default_messages.push_back({ChatRole::kUser, prompt.full_text});
  Completion completion;
  try {
    completion = backend.complete(messages ? *messages : default_messages);
  } catch (...) {
    std::lock_guard lock(metrics_mutex_);
    ++metrics_.requests;
    ++metrics_.misses;
    sample_locked();
    throw;
  }
  out.timings.llm_ms = ms_since(t);
  out.response_text = completion.text;
  out.tokens.spent_input = completion.usage.input;
  out.tokens.spent_output = completion.usage.output;

  std::optional<ClusterId> assigned;
  if (embedding) {
    t = Clock::now();
    try {
      Exemplar ex;
      ex.response = parse_response(completion.text);
      ex.response_embeddings = embed_response_values(*embedder_, ex.response);
      ex.prompt_embedding = std::move(*embedding);
      ex.prompt = prompt;
      auto a = clusters_.assign(std::move(ex));
      assigned = a.cluster_id;
    } catch (const std::exception& e) {
      spdlog::warn("could not store exemplar for request {}: {}", out.request_id, e.what());
    }
    out.timings.db_insert_ms = ms_since(t);
  }
  out.cluster_id = assigned;
  remember(out.request_id, {ServedFrom::kLlm, assigned, 0, prompt.user_text, out.response_text});
  {
    std::lock_guard lock(metrics_mutex_);
    ++metrics_.requests;
    ++metrics_.misses;
    metrics_.tokens_spent_input += completion.usage.input;
    metrics_.tokens_spent_output += completion.usage.output;
    sample_locked();
  }
  if (assigned) maybe_schedule(*assigned);
  return out;
}

void Runtime::sample_locked() {
  if (metrics_.requests == 1 || (config_.series_window > 0 && metrics_.requests % config_.series_window == 0)) {
    metrics_.ratio_samples.push_back({metrics_.requests, metrics_.codegen_llm_calls, metrics_.hits});
  }
}

void Runtime::remember(const std::string& id, LogEntry entry) {
  std::lock_guard lock(log_mutex_);
  if (log_.count(id) == 0) {
    log_order_.push_back(id);
    while (log_order_.size() > std::max<std::size_t>(config_.request_log_capacity, 1)) {
      log_.erase(log_order_.front());
      log_order_.pop_front();
    }
  }
  log_[id] = std::move(entry);
}

FeedbackStatus Runtime::record_feedback(std::string_view request_id, bool valid, std::string_view reason) {
  LogEntry entry;
  {
    std::lock_guard lock(log_mutex_);
    auto it = log_.find(std::string(request_id));
    if (it == log_.end()) return FeedbackStatus::kUnknownRequest;
    entry = it->second;
  }
  if (valid || entry.served_from != ServedFrom::kCache || !entry.cluster_id) return FeedbackStatus::kIgnored;

  ClusterId id = *entry.cluster_id;
  // Only the program that served the request is deleted, so repeated reports
  // never remove a regenerated successor.
  if (!cache_.delete_generation(id, entry.generation)) return FeedbackStatus::kIgnored;
  clusters_.set_has_cache(id, false);
  std::string note = "a cached answer was reported wrong. Request: \"" + entry.prompt_text + "\". Program output: \"" +
                     entry.response_text + "\".";
  if (!reason.empty()) note += " Reported problem: " + std::string(reason);
  clusters_.set_feedback_note(id, std::move(note));
  {
    std::lock_guard lock(metrics_mutex_);
    ++metrics_.feedback_deletions;
  }
  spdlog::info("negative feedback on request {}: deleted program for cluster {}", request_id, id);
  maybe_schedule(id);
  return FeedbackStatus::kApplied;
}

void Runtime::maybe_schedule(ClusterId id) {
  auto s = clusters_.summary(id);
  if (!s || s->has_cache || s->size < config_.codegen.nu || s->retries_used >= config_.codegen.rho) return;
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_ || !pending_.insert(id).second) return;  // one task per cluster
    if (!config_.synchronous_codegen) {
      queue_.push_back(id);
      queue_cv_.notify_one();
      return;
    }
  }
  run_generation(id);
  std::lock_guard lock(queue_mutex_);
  pending_.erase(id);
  if (pending_.empty()) idle_cv_.notify_all();
}

void Runtime::run_generation(ClusterId id) {
  GenerationResult r;
  try {
    r = generate_cache(clusters_, id, *codegen_, *validator_, config_.codegen);
  } catch (const std::exception& e) {
    spdlog::error("program generation for cluster {} failed: {}", id, e.what());
    return;
  }
  std::vector<ClusterId> evicted;
  if (r.program) {
    evicted = cache_.put(id, std::move(*r.program));
    clusters_.set_has_cache(id, true);
    for (auto e : evicted) clusters_.set_has_cache(e, false);
    spdlog::debug("cluster {}: program accepted after {} attempt(s)", id, r.attempts);
  } else if (r.attempts > 0) {
    spdlog::debug("cluster {}: no program after {} attempt(s): {}", id, r.attempts, r.last_reason);
  }
  std::lock_guard lock(metrics_mutex_);
  metrics_.codegen_llm_calls += static_cast<std::uint64_t>(r.llm_calls);
  metrics_.codegen_attempts += static_cast<std::uint64_t>(r.attempts);
  metrics_.codegen_accepted += r.program ? 1 : 0;
  metrics_.tokens_spent_input += r.usage.input;
  metrics_.tokens_spent_output += r.usage.output;
  metrics_.evictions += evicted.size();
}

void Runtime::worker_loop() {
  while (true) {
    ClusterId id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;  // stopping and drained
      id = queue_.front();
      queue_.pop_front();
    }
    run_generation(id);
    std::lock_guard lock(queue_mutex_);
    pending_.erase(id);
    if (pending_.empty()) idle_cv_.notify_all();
  }
}

void Runtime::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return pending_.empty(); });
}

void Runtime::shutdown() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  workers_.clear();
}

Metrics Runtime::metrics() const {
  std::lock_guard lock(metrics_mutex_);
  return metrics_;
}

std::vector<ClusterSummary> Runtime::clusters() const { return clusters_.summaries(); }

void Runtime::snapshot(const std::filesystem::path& dir) {
  detail::write_snapshot(dir, clusters_.clusters(), cache_.entries_lru_order());
}

void Runtime::restore(const std::filesystem::path& dir) {
  auto state = detail::read_snapshot(dir, *embedder_, config_.codegen.nu, config_.codegen.max_program_bytes);
  for (auto& c : state.clusters) c.has_cache = false;
  for (const auto& e : state.entries) {
    auto it = std::lower_bound(state.clusters.begin(), state.clusters.end(), e.cluster_id,
                               [](const Cluster& c, ClusterId v) { return c.id() < v; });
    it->has_cache = true;  // read_snapshot guarantees the cluster exists
  }
  clusters_.load(std::move(state.clusters));
  cache_.clear();
  for (auto& e : state.entries) {
    for (auto evicted : cache_.put(e.cluster_id, std::move(e.program), e.created_at)) {
      clusters_.set_has_cache(evicted, false);
    }
  }
  {
    std::lock_guard lock(log_mutex_);
    log_.clear();
    log_order_.clear();
  }
}

}  // namespace gencache
