#ifndef GENCACHE_CODEGEN_HPP
#define GENCACHE_CODEGEN_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gencache/clustering.hpp"
#include "gencache/llm.hpp"
#include "gencache/program.hpp"

namespace gencache {

/// nu: exemplars needed before generation (clusters cap at 3 nu).
/// gamma_percent: share of exemplars a program must reproduce.
/// rho: lifetime generation attempts per cluster.
struct CodegenConfig {
  std::size_t nu = 4;
  double gamma_percent = 50.0;
  int rho = 30;
  ProgramKind mode = ProgramKind::kDeclarative;
  // Skip the validator when every program output equals its exemplar
  // response byte for byte.
  bool byte_equal_shortcut = true;
  std::string runtime_command = "python3 {script}";
  std::size_t max_program_bytes = kDefaultMaxProgramBytes;
  ExecLimits exec_limits{};

  void validate() const;
};

/// One bit per exemplar plus a single combined reason.
struct ValidationReport {
  std::vector<int> valid;
  std::string reason;

  std::size_t matches() const noexcept;
};

/// A generation attempt failed (unparseable program, bad validator output,
/// compile error). Counts against rho.
class CodegenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inclusive gate: matches / total * 100 >= gamma.
bool meets_gamma(std::size_t matches, std::size_t total, double gamma_percent) noexcept;

/// Throws std::invalid_argument when fewer than `nu` exemplars are given.
std::vector<ChatMessage> build_codegen_prompt(std::span<const Exemplar> exemplars, const CodegenConfig& config,
                                              const std::optional<std::string>& prior_feedback = std::nullopt);

/// Declarative: first well-formed program document (fenced or bare).
/// External script: fence-stripped code whose `# STRUCTURAL: <regex>` line
/// supplies the structural regex. Throws CodegenError.
ProgramSource parse_program_source(std::string_view llm_text, const CodegenConfig& config);

struct Comparison {
  std::string generated;
  std::string ground_truth;
};

std::vector<ChatMessage> build_validation_prompt(std::span<const Comparison> comparisons);

/// Reads `{"valid":[0|1,...],"reason":"..."}` (fenced or bare). Throws
/// CodegenError when missing, malformed or of the wrong length.
ValidationReport parse_validation_report(std::string_view llm_text, std::size_t expected_len);

struct ValidationOutcome {
  ValidationReport report;
  int validator_calls = 0;
  TokenUsage usage;
};

/// Runs the program on every exemplar prompt. Null/error executions are 0
/// without asking the validator; byte-equal outputs are 1 when the shortcut
/// is enabled; the rest go to the validator in one call.
ValidationOutcome validate_program(const CompiledProgram& program, std::span<const Exemplar> exemplars,
                                   LlmBackend& validator, const CodegenConfig& config);

struct GenerationResult {
  std::optional<CompiledProgram> program;
  int attempts = 0;
  int llm_calls = 0;  // codegen + validator calls
  TokenUsage usage;
  std::string last_reason;
};

/// Generate-validate-reflect loop for one cluster. Each attempt consumes one
/// of the cluster's rho retries; the loop stops on the first accepted program
/// or when retries run out. Attempt k's prompt carries attempt k-1's
/// validator reason (or the cluster's feedback note on the first attempt).
GenerationResult generate_cache(ClusterStore& store, ClusterId cluster_id, LlmBackend& codegen,
                                LlmBackend& validator, const CodegenConfig& config);

}  // namespace gencache

#endif  // GENCACHE_CODEGEN_HPP
