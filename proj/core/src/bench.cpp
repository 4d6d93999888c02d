#include <json.hpp>

#include <unordered_set>

#include "gencache/bench.hpp"
#include "gencache/runtime.hpp"

namespace gencache::bench {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::kExact:
      return "exact";
    case Strategy::kSemantic:
      return "semantic";
    case Strategy::kGenCache:
      return "gencache";
    case Strategy::kGenCacheFeedback:
      return "gencache-feedback";
  }
  return "exact";
}

std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  for (auto s : {Strategy::kExact, Strategy::kSemantic, Strategy::kGenCache, Strategy::kGenCacheFeedback}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

namespace {

std::vector<ChatMessage> agent_messages(const SyntheticInstruction& instr) {
  return {{ChatRole::kSystem, std::string(system_message())}, {ChatRole::kUser, "Instruction: " + instr.text}};
}

struct Tally {
  BenchReport& report;

  void hit(const SyntheticInstruction& instr, std::string_view response) {
    ++report.hits;
    if (is_positive_hit(instr, response)) {
      ++report.positive_hits;
    } else {
      ++report.negative_hits;
    }
  }
};

void run_exact(std::span<const SyntheticInstruction> instructions, BenchReport& report) {
  AgentDouble agent;
  std::unordered_map<std::string, std::string> seen;
  Tally tally{report};
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    auto prompt = make_prompt(instructions[i], std::to_string(i));
    if (auto it = seen.find(prompt.full_text); it != seen.end()) {
      tally.hit(instructions[i], it->second);
      report.tokens_saved_input += estimate_tokens(prompt.full_text);
      report.tokens_saved_output += estimate_tokens(it->second);
      continue;
    }
    auto c = agent.complete(agent_messages(instructions[i]));
    report.tokens_spent_input += c.usage.input;
    report.tokens_spent_output += c.usage.output;
    seen.emplace(std::move(prompt.full_text), std::move(c.text));
  }
}

void run_semantic(std::span<const SyntheticInstruction> instructions, const BenchConfig& config,
                  BenchReport& report) {
  AgentDouble agent;
  HashedEmbedder embedder(config.embed_dims);
  std::vector<std::pair<Embedding, std::string>> store;
  Tally tally{report};
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    auto prompt = make_prompt(instructions[i], std::to_string(i));
    auto e = embedder.embed(prompt.full_text);
    const std::string* best = nullptr;
    double best_sim = config.semantic_threshold;
    for (const auto& [stored, response] : store) {
      double s = cosine(e, stored);
      if (s > best_sim) {
        best_sim = s;
        best = &response;
      }
    }
    if (best) {
      tally.hit(instructions[i], *best);
      report.tokens_saved_input += estimate_tokens(prompt.full_text);
      report.tokens_saved_output += estimate_tokens(*best);
      continue;
    }
    auto c = agent.complete(agent_messages(instructions[i]));
    report.tokens_spent_input += c.usage.input;
    report.tokens_spent_output += c.usage.output;
    store.emplace_back(std::move(e), std::move(c.text));
  }
}

void run_gencache(Family family, std::span<const SyntheticInstruction> instructions, const BenchConfig& config,
                  bool feedback, BenchReport& report) {
  RuntimeConfig rc;
  rc.thresholds = config.thresholds;
  rc.codegen = config.codegen;
  rc.workers = 0;
  rc.synchronous_codegen = true;
  rc.series_window = config.window;
  Runtime runtime(rc, std::make_shared<HashedEmbedder>(config.embed_dims),
                  std::make_shared<FamilyCodegenDouble>(family), std::make_shared<ComparingValidator>());
  AgentDouble agent;
  Tally tally{report};
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    auto out = runtime.handle_request(make_prompt(instructions[i], {}), agent_messages(instructions[i]), agent);
    if (out.served_from != ServedFrom::kCache) continue;
    bool positive = is_positive_hit(instructions[i], out.response_text);
    tally.hit(instructions[i], out.response_text);
    if (feedback && !positive) runtime.record_feedback(out.request_id, false, "wrong item or price");
  }
  runtime.wait_idle();

  auto m = runtime.metrics();
  report.codegen_calls = m.codegen_llm_calls;
  report.codegen_attempts = m.codegen_attempts;
  report.codegen_accepted = m.codegen_accepted;
  report.feedback_deletions = m.feedback_deletions;
  report.tokens_spent_input = m.tokens_spent_input;
  report.tokens_spent_output = m.tokens_spent_output;
  report.tokens_saved_input = m.tokens_saved_input;
  report.tokens_saved_output = m.tokens_saved_output;
  report.clusters = runtime.clusters().size();
  for (const auto& s : m.ratio_samples) {
    if (s.requests == 1 || s.requests % config.window == 0) report.ratio_points.push_back(s.requests);
  }
  report.ratio_series = cost_ratio_series(m, config.window);
  runtime.shutdown();
}

}  // namespace

BenchReport run_strategy(Strategy strategy, Family family, std::span<const SyntheticInstruction> instructions,
                         std::uint64_t seed, const BenchConfig& config) {
  if (config.window == 0) throw std::invalid_argument("bench window must be positive");
  BenchReport report;
  report.strategy = strategy;
  report.family = family;
  report.n = instructions.size();
  report.seed = seed;
  report.config = config;

  switch (strategy) {
    case Strategy::kExact:
      run_exact(instructions, report);
      break;
    case Strategy::kSemantic:
      run_semantic(instructions, config, report);
      break;
    case Strategy::kGenCache:
    case Strategy::kGenCacheFeedback:
      run_gencache(family, instructions, config, strategy == Strategy::kGenCacheFeedback, report);
      break;
  }

  if (report.n > 0) report.hit_rate = 100.0 * static_cast<double>(report.hits) / static_cast<double>(report.n);
  if (report.hits > 0) {
    report.positive_hit_rate = 100.0 * static_cast<double>(report.positive_hits) / static_cast<double>(report.hits);
    report.negative_hit_rate = 100.0 - *report.positive_hit_rate;
  }
  return report;
}

std::string report_to_json(const BenchReport& r) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json series = ordered_json::array();
  for (std::size_t i = 0; i < r.ratio_series.size(); ++i) {
    ordered_json point;
    point["requests"] = i < r.ratio_points.size() ? ordered_json(r.ratio_points[i]) : ordered_json(nullptr);
    point["ratio"] = r.ratio_series[i] == kRatioSentinel ? ordered_json(nullptr) : ordered_json(r.ratio_series[i]);
    series.push_back(std::move(point));
  }
  ordered_json j;
  j["note"] =
      "synthetic template dataset with deterministic model doubles; hits are judged by a ground-truth "
      "extraction oracle, not by a language model";
  j["strategy"] = to_string(r.strategy);
  j["dataset"] = to_string(r.family);
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["hits"] = r.hits;
  j["positive_hits"] = r.positive_hits;
  j["negative_hits"] = r.negative_hits;
  j["hit_rate"] = r.hit_rate;
  j["positive_hit_rate"] = opt(r.positive_hit_rate);
  j["negative_hit_rate"] = opt(r.negative_hit_rate);
  j["codegen_calls"] = r.codegen_calls;
  j["codegen_attempts"] = r.codegen_attempts;
  j["codegen_accepted"] = r.codegen_accepted;
  j["feedback_deletions"] = r.feedback_deletions;
  j["clusters"] = r.clusters;
  j["tokens"] = {{"spent_input", r.tokens_spent_input},
                 {"spent_output", r.tokens_spent_output},
                 {"saved_input", r.tokens_saved_input},
                 {"saved_output", r.tokens_saved_output}};
  j["ratio_series"] = std::move(series);
  j["config"] = {{"embed_dims", r.config.embed_dims},
                 {"semantic_threshold", r.config.semantic_threshold},
                 {"t_prompt", r.config.thresholds.t_prompt},
                 {"t_response", r.config.thresholds.t_response},
                 {"nu", r.config.codegen.nu},
                 {"gamma", r.config.codegen.gamma_percent},
                 {"rho", r.config.codegen.rho},
                 {"window", r.config.window}};
  return j.dump(2);
}

}  // namespace gencache::bench
