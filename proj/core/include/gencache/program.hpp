#ifndef GENCACHE_PROGRAM_HPP
#define GENCACHE_PROGRAM_HPP

#include <chrono>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gencache/prompt.hpp"

namespace gencache {

// ---------------------------------------------------------------------------
// Program sources

/// Literal text with `{group}` placeholders; `{{` and `}}` are literal braces.
struct ResponseTemplate {
  ResponseKind kind = ResponseKind::kPlain;
  std::string text;                                          // plain
  std::vector<std::pair<std::string, std::string>> entries;  // structured: key -> value template

  static ResponseTemplate plain(std::string text);
  static ResponseTemplate structured(std::vector<std::pair<std::string, std::string>> entries);

  friend bool operator==(const ResponseTemplate&, const ResponseTemplate&) = default;
};

struct PatternRule {
  std::string match_regex;
  ResponseTemplate response;

  friend bool operator==(const PatternRule&, const PatternRule&) = default;
};

enum class ProgramKind { kDeclarative, kExternalScript };

inline constexpr int kProgramFormatVersion = 1;

/// The cached artifact before compilation. Declarative programs are an
/// ordered rule list (first match wins); external scripts run under
/// `runtime_command` with the prompt as the only extra argument. Both carry
/// the cluster's structural regex.
struct ProgramSource {
  ProgramKind kind = ProgramKind::kDeclarative;
  int version = kProgramFormatVersion;
  std::string structural_regex;
  std::vector<PatternRule> rules;  // declarative
  std::string script;              // external-script
  std::string runtime_command;     // external-script, e.g. "python3 {script}"

  friend bool operator==(const ProgramSource&, const ProgramSource&) = default;
};

/// Versioned JSON document, keys in a fixed order. Its byte length is the
/// program size used for cache accounting.
std::string serialize_program(const ProgramSource& source);

/// Throws ProgramError on malformed documents. `kind` and `version` may be
/// omitted (defaults: declarative, current version).
ProgramSource parse_program(std::string_view document);

class ProgramError : public std::runtime_error {
 public:
  ProgramError(std::string location, const std::string& message)
      : std::runtime_error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

// ---------------------------------------------------------------------------
// Compilation and execution

inline constexpr std::size_t kDefaultMaxProgramBytes = 16384;

struct ExecLimits {
  std::chrono::milliseconds timeout{2000};
  std::size_t max_output_bytes = 64 * 1024;
};

struct ExecNull {
  std::string reason;
};
struct ExecError {
  std::string reason;
};

/// Exactly one of: a response, a declined prompt (null) or a failure.
struct ExecResult {
  std::variant<ResponseDoc, ExecNull, ExecError> outcome;

  bool is_response() const noexcept { return std::holds_alternative<ResponseDoc>(outcome); }
  bool is_null() const noexcept { return std::holds_alternative<ExecNull>(outcome); }
  bool is_error() const noexcept { return std::holds_alternative<ExecError>(outcome); }
  const ResponseDoc& response() const { return std::get<ResponseDoc>(outcome); }
  /// Null or error reason; empty for responses.
  std::string reason() const;
};

/// Immutable compiled program; cheap to copy and safe to execute from many
/// threads.
class CompiledProgram {
 public:
  const ProgramSource& source() const noexcept;
  std::size_t size_bytes() const noexcept;
  const std::string& canonical() const noexcept;

  struct Impl;

 private:
  friend CompiledProgram compile(const ProgramSource&, std::size_t);
  friend bool structural_match(const CompiledProgram&, std::string_view);
  friend ExecResult execute(const CompiledProgram&, std::string_view, const ExecLimits&);

  explicit CompiledProgram(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

/// Compiles every regex (case-insensitive, `.` matches newline), checks that
/// each placeholder names a capture group and that the canonical size fits
/// `max_bytes`. External scripts are written to a private temporary file that
/// lives as long as the program. Throws ProgramError.
CompiledProgram compile(const ProgramSource& source, std::size_t max_bytes = kDefaultMaxProgramBytes);

/// Search (not full-match) semantics.
bool structural_match(const CompiledProgram& program, std::string_view prompt_text);

/// Never throws.
ExecResult execute(const CompiledProgram& program, std::string_view prompt_text, const ExecLimits& limits = {});

/// Expected response shape: arity 0 means a plain response is expected.
bool sanity_check(const ExecResult& result, std::size_t expected_arity);
/// Shape-aware variant used by the runtime.
bool sanity_check(const ExecResult& result, ResponseKind kind, std::size_t arity);

/// Caps the number of external-script processes running at once (default 8).
void set_max_concurrent_processes(std::size_t n);

/// Names of capture groups declared in `pattern` (named groups only).
std::vector<std::string> named_groups(std::string_view pattern);

}  // namespace gencache

#endif  // GENCACHE_PROGRAM_HPP
