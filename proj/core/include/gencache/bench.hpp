#ifndef GENCACHE_BENCH_HPP
#define GENCACHE_BENCH_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gencache/clustering.hpp"
#include "gencache/codegen.hpp"
#include "gencache/llm.hpp"
#include "gencache/prompt.hpp"

namespace gencache::bench {

// ---------------------------------------------------------------------------
// Seed catalog

/// One catalog line: `noun<TAB>attr|attr|...<TAB>min_price<TAB>max_price`.
struct CatalogItem {
  std::string noun;
  std::vector<std::string> attributes;
  int min_price = 5;
  int max_price = 100;
};

/// Throws std::invalid_argument with the offending line number.
std::vector<CatalogItem> parse_catalog(std::string_view text);
/// The catalog shipped in core/data/catalog.tsv.
const std::vector<CatalogItem>& default_catalog();

// ---------------------------------------------------------------------------
// Synthetic instruction families

enum class Family { kParamOnly, kParamWithSynonym, kStructural };

std::string_view to_string(Family f) noexcept;
std::optional<Family> parse_family(std::string_view name) noexcept;

struct GroundTruth {
  std::string item;
  std::string price;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SyntheticInstruction {
  std::string text;
  GroundTruth ground_truth;
  Family family = Family::kParamOnly;
  std::size_t seed_item_id = 0;  // catalog index
  int variant = 0;               // structural template index, or 1 for split sentences
};

/// The verb phrases used by the synonym family, in their documented order.
inline constexpr std::array<std::string_view, 6> kSynonymVerbs = {
    "i want to buy", "buy", "purchase", "find me", "i am looking for", "get"};

inline constexpr std::size_t kStructuralTemplateCount = 10;

/// "I want to buy {item}, under the price range of {price} dollars".
std::vector<SyntheticInstruction> gen_param_only(std::size_t n, std::uint64_t seed);
/// Verb drawn from kSynonymVerbs, optional leading "please", and with
/// probability 0.1 a two-sentence split ("... headphones. need it in black, ...").
std::vector<SyntheticInstruction> gen_param_w_synonym(std::size_t n, std::uint64_t seed);
/// One of kStructuralTemplateCount structurally different phrasings per draw.
std::vector<SyntheticInstruction> gen_structural(std::size_t n, std::uint64_t seed);
std::vector<SyntheticInstruction> generate(Family family, std::size_t n, std::uint64_t seed);

/// All structural phrasings of one (item, price) pair.
std::vector<SyntheticInstruction> render_structural_variants(const GroundTruth& truth, std::size_t seed_item_id);

// ---------------------------------------------------------------------------
// Prompt and response formats shared by the doubles and the oracle

/// Fixed agent system message prepended to every instruction.
std::string_view system_message();
/// system message + "\n\nInstruction: " + instruction.
PromptRecord make_prompt(const SyntheticInstruction& instruction, std::string id);
/// The action line the agent model answers with.
std::string render_agent_response(const GroundTruth& truth);
std::optional<GroundTruth> parse_agent_response(std::string_view response);

/// Lower-case, trim, collapse whitespace, strip a trailing ".00".
std::string normalize_value(std::string_view value);

/// Canonical extractor for the family (the ground-truth oracle).
std::optional<GroundTruth> extract_ground_truth(Family family, std::string_view instruction_text);
/// Positive iff the response's item and price match the ground truth after
/// normalization.
bool is_positive_hit(const SyntheticInstruction& instruction, std::string_view response_text);

// ---------------------------------------------------------------------------
// Deterministic model doubles

/// Miss-path model: answers every instruction correctly.
class AgentDouble final : public LlmBackend {
 public:
  Completion complete(const std::vector<ChatMessage>& messages) override;
};

/// Code-generation double for one family. It only reads the exemplars and
/// reflection text in its prompt and emits a declarative program:
///   param-only: the canonical template rule;
///   param-w-synonym: a verb alternation with at most 5 synonyms (those seen
///     in the exemplars first); after reflection it anchors the rule to the
///     instruction start and refuses sentence breaks inside the item;
///   structural: the param-only rule, regardless of the exemplars.
class FamilyCodegenDouble final : public LlmBackend {
 public:
  explicit FamilyCodegenDouble(Family family) : family_(family) {}
  Completion complete(const std::vector<ChatMessage>& messages) override;

  static std::string program_for(Family family, std::span<const std::string> exemplar_prompts, bool reflected);

 private:
  Family family_;
};

/// Validator double: compares each generated/ground-truth pair after
/// lower-casing, unifying quotes and collapsing whitespace.
class ComparingValidator final : public LlmBackend {
 public:
  Completion complete(const std::vector<ChatMessage>& messages) override;
};

// ---------------------------------------------------------------------------
// Evaluation

enum class Strategy { kExact, kSemantic, kGenCache, kGenCacheFeedback };

std::string_view to_string(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name) noexcept;

struct BenchConfig {
  std::size_t embed_dims = 384;
  double semantic_threshold = 0.95;
  ClusterThresholds thresholds{};
  CodegenConfig codegen{};
  std::size_t window = 100;
};

struct BenchReport {
  Strategy strategy = Strategy::kExact;
  Family family = Family::kParamOnly;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t hits = 0;
  std::size_t positive_hits = 0;
  std::size_t negative_hits = 0;
  double hit_rate = 0.0;                     // percent of requests
  std::optional<double> positive_hit_rate;   // percent of hits
  std::optional<double> negative_hit_rate;   // percent of hits
  std::uint64_t codegen_calls = 0;
  std::uint64_t codegen_attempts = 0;
  std::uint64_t codegen_accepted = 0;
  std::uint64_t feedback_deletions = 0;
  std::size_t clusters = 0;
  long long tokens_spent_input = 0;
  long long tokens_spent_output = 0;
  long long tokens_saved_input = 0;
  long long tokens_saved_output = 0;
  std::vector<std::uint64_t> ratio_points;  // request counts
  std::vector<double> ratio_series;         // kRatioSentinel when no hits yet
  BenchConfig config{};
};

BenchReport run_strategy(Strategy strategy, Family family, std::span<const SyntheticInstruction> instructions,
                         std::uint64_t seed, const BenchConfig& config = {});

/// Deterministic JSON document (no timestamps or timings).
std::string report_to_json(const BenchReport& report);

}  // namespace gencache::bench

#endif  // GENCACHE_BENCH_HPP
