#include "gencache/codegen.hpp"

#include <json.hpp>
#include <regex>

#include "assets.hpp"

namespace gencache {

void CodegenConfig::validate() const {
  if (nu < 2) throw std::invalid_argument("nu must be >= 2");
  if (!(gamma_percent > 0.0 && gamma_percent <= 100.0)) throw std::invalid_argument("gamma must be in (0,100]");
  if (rho < 1) throw std::invalid_argument("rho must be >= 1");
  if (max_program_bytes == 0) throw std::invalid_argument("max_program_bytes must be positive");
  if (mode == ProgramKind::kExternalScript && runtime_command.find("{script}") == std::string::npos) {
    throw std::invalid_argument("runtime_command must contain {script}");
  }
}

std::size_t ValidationReport::matches() const noexcept {
  std::size_t n = 0;
  for (int v : valid) n += v == 1;
  return n;
}

bool meets_gamma(std::size_t matches, std::size_t total, double gamma_percent) noexcept {
  if (total == 0) return false;
  return static_cast<double>(matches) * 100.0 >= gamma_percent * static_cast<double>(total);
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string render_examples(std::span<const Exemplar> exemplars) {
  std::string out;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    out += "<example index=\"" + std::to_string(i + 1) + "\">\n<prompt>\n";
    out += exemplars[i].prompt.full_text;
    out += "\n</prompt>\n<response>\n";
    out += serialize_response(exemplars[i].response);
    out += "\n</response>\n</example>\n";
  }
  return out;
}

}  // namespace

std::vector<ChatMessage> build_codegen_prompt(std::span<const Exemplar> exemplars, const CodegenConfig& config,
                                              const std::optional<std::string>& prior_feedback) {
  if (exemplars.size() < config.nu) {
    throw std::invalid_argument("need at least " + std::to_string(config.nu) + " exemplars, got " +
                                std::to_string(exemplars.size()));
  }
  std::string system(config.mode == ProgramKind::kDeclarative ? assets::prompt_codegen_declarative()
                                                               : assets::prompt_codegen_script());
  std::string feedback;
  if (prior_feedback && !prior_feedback->empty()) {
    feedback =
        "\nReflection on the previous attempt:\nThe previous program was rejected for this reason: " +
        *prior_feedback + "\nFix that problem; keep whatever already worked.\n";
  }
  std::string command = config.runtime_command;
  replace_all(command, "{script}", "program_file");
  // Examples go in last so their text is never scanned for placeholders.
  replace_all(system, "{{FEEDBACK}}", feedback);
  replace_all(system, "{{COMMAND}}", command);
  replace_all(system, "{{EXAMPLES}}", render_examples(exemplars));
  return {{ChatRole::kSystem, std::move(system)}, {ChatRole::kUser, "Now begin."}};
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

// Contents of ``` fenced blocks, language tag stripped, in order.
std::vector<std::string> fenced_blocks(std::string_view text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    auto close = text.find("```", body + 1);
    if (close == std::string_view::npos) break;
    blocks.emplace_back(text.substr(body + 1, close - body - 1));
    pos = close + 3;
  }
  return blocks;
}

// Balanced {...} substrings starting at each top-level '{', string-aware.
std::vector<std::string> brace_candidates(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        out.emplace_back(text.substr(start, i - start + 1));
        break;
      }
    }
    if (out.size() >= 16) break;
  }
  return out;
}

std::vector<std::string> json_candidates(std::string_view text) {
  std::vector<std::string> c = fenced_blocks(text);
  c.emplace_back(text);
  for (auto& b : brace_candidates(text)) c.push_back(std::move(b));
  return c;
}

}  // namespace

ProgramSource parse_program_source(std::string_view llm_text, const CodegenConfig& config) {
  if (config.mode == ProgramKind::kExternalScript) {
    auto blocks = fenced_blocks(llm_text);
    std::string script = blocks.empty() ? std::string(llm_text) : blocks.front();
    static const std::regex kStructural(R"(^[ \t]*#[ \t]*STRUCTURAL:[ \t]*(.*?)[ \t]*\r?$)",
                                        std::regex::multiline);
    std::smatch m;
    if (!std::regex_search(script, m, kStructural) || m[1].length() == 0) {
      throw CodegenError("script has no \"# STRUCTURAL: <regex>\" line");
    }
    ProgramSource s;
    s.kind = ProgramKind::kExternalScript;
    s.structural_regex = m[1].str();
    s.script = std::move(script);
    s.runtime_command = config.runtime_command;
    return s;
  }

  std::string last_error = "no JSON object in output";
  for (const auto& candidate : json_candidates(llm_text)) {
    try {
      auto s = parse_program(candidate);
      if (s.kind != ProgramKind::kDeclarative) {
        last_error = "expected a declarative program";
        continue;
      }
      return s;
    } catch (const ProgramError& e) {
      // Keep the most specific error: one from a JSON object rather than prose.
      if (std::string_view(e.what()).find("not valid JSON") == std::string_view::npos) last_error = e.what();
    }
  }
  throw CodegenError("no usable program document: " + last_error);
}

std::vector<ChatMessage> build_validation_prompt(std::span<const Comparison> comparisons) {
  std::string list;
  for (std::size_t i = 0; i < comparisons.size(); ++i) {
    list += "<comparison index=\"" + std::to_string(i + 1) + "\">\n<generated>\n" + comparisons[i].generated +
            "\n</generated>\n<ground_truth>\n" + comparisons[i].ground_truth + "\n</ground_truth>\n</comparison>\n";
  }
  std::string system(assets::prompt_validator());
  replace_all(system, "{{COMPARISONS}}", list);
  return {{ChatRole::kSystem, std::move(system)}, {ChatRole::kUser, "Now begin."}};
}

ValidationReport parse_validation_report(std::string_view llm_text, std::size_t expected_len) {
  std::string last_error = "no JSON object in output";
  for (const auto& candidate : json_candidates(llm_text)) {
    auto doc = nlohmann::json::parse(candidate, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) continue;
    auto valid = doc.find("valid");
    if (valid == doc.end() || !valid->is_array()) {
      last_error = "missing \"valid\" list";
      continue;
    }
    ValidationReport r;
    bool ok = true;
    for (const auto& v : *valid) {
      if (v.is_boolean()) {
        r.valid.push_back(v.get<bool>() ? 1 : 0);
      } else if (v.is_number_integer() && (v.get<long long>() == 0 || v.get<long long>() == 1)) {
        r.valid.push_back(static_cast<int>(v.get<long long>()));
      } else {
        ok = false;
        break;
      }
    }
    if (!ok) {
      last_error = "\"valid\" entries must be 0 or 1";
      continue;
    }
    if (r.valid.size() != expected_len) {
      last_error = "\"valid\" has " + std::to_string(r.valid.size()) + " entries, expected " +
                   std::to_string(expected_len);
      continue;
    }
    if (auto reason = doc.find("reason"); reason != doc.end() && reason->is_string()) {
      r.reason = reason->get<std::string>();
    }
    return r;
  }
  throw CodegenError("unusable validator reply: " + last_error);
}

ValidationOutcome validate_program(const CompiledProgram& program, std::span<const Exemplar> exemplars,
                                   LlmBackend& validator, const CodegenConfig& config) {
  ValidationOutcome out;
  out.report.valid.assign(exemplars.size(), 0);
  std::vector<Comparison> pending;
  std::vector<std::size_t> pending_index;
  std::size_t failed_runs = 0;
  std::string first_failure;

  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    auto r = execute(program, exemplars[i].prompt.full_text, config.exec_limits);
    if (!r.is_response()) {
      if (failed_runs++ == 0) first_failure = r.reason();
      continue;
    }
    Comparison c{serialize_response(r.response()), serialize_response(exemplars[i].response)};
    if (config.byte_equal_shortcut && c.generated == c.ground_truth) {
      out.report.valid[i] = 1;
      continue;
    }
    pending.push_back(std::move(c));
    pending_index.push_back(i);
  }

  std::string validator_reason;
  if (!pending.empty()) {
    ++out.validator_calls;
    auto completion = validator.complete(build_validation_prompt(pending));
    out.usage += completion.usage;
    auto report = parse_validation_report(completion.text, pending.size());
    for (std::size_t k = 0; k < pending.size(); ++k) out.report.valid[pending_index[k]] = report.valid[k];
    validator_reason = std::move(report.reason);
  }

  std::string reason = validator_reason;
  if (failed_runs > 0) {
    if (!reason.empty()) reason += "; ";
    reason += "the program produced no response for " + std::to_string(failed_runs) + " of " +
              std::to_string(exemplars.size()) + " examples (" + first_failure + ")";
  }
  out.report.reason = std::move(reason);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class CountingBackend final : public LlmBackend {
 public:
  explicit CountingBackend(LlmBackend& inner) : inner_(inner) {}

  Completion complete(const std::vector<ChatMessage>& messages) override {
    ++calls;
    auto c = inner_.complete(messages);
    usage += c.usage;
    return c;
  }

  int calls = 0;
  TokenUsage usage;

 private:
  LlmBackend& inner_;
};

}  // namespace

GenerationResult generate_cache(ClusterStore& store, ClusterId cluster_id, LlmBackend& codegen, LlmBackend& validator,
                                const CodegenConfig& config) {
  GenerationResult result;
  CountingBackend counted_codegen(codegen);
  CountingBackend counted_validator(validator);
  auto finish = [&] {
    result.llm_calls = counted_codegen.calls + counted_validator.calls;
    result.usage = counted_codegen.usage;
    result.usage += counted_validator.usage;
    return result;
  };

  std::optional<std::string> feedback;
  if (auto note = store.take_feedback_note(cluster_id); !note.empty()) feedback = std::move(note);

  while (true) {
    auto cluster = store.get(cluster_id);
    if (!cluster || cluster->has_cache || cluster->size() < config.nu) break;
    if (!store.try_consume_retry(cluster_id, config.rho)) break;
    ++result.attempts;
    const auto& exemplars = cluster->exemplars();
    try {
      auto reply = counted_codegen.complete(build_codegen_prompt(exemplars, config, feedback));
      auto program = compile(parse_program_source(reply.text, config), config.max_program_bytes);
      auto outcome = validate_program(program, exemplars, counted_validator, config);
      auto matches = outcome.report.matches();
      if (meets_gamma(matches, exemplars.size(), config.gamma_percent)) {
        result.program = std::move(program);
        result.last_reason.clear();
        return finish();
      }
      std::string reason = outcome.report.reason;
      if (reason.empty()) {
        reason = "only " + std::to_string(matches) + " of " + std::to_string(exemplars.size()) +
                 " example responses were reproduced";
      }
      result.last_reason = reason;
      feedback = std::move(reason);
    } catch (const std::exception& e) {
      result.last_reason = e.what();
      feedback = std::string("the previous output could not be used: ") + e.what();
    }
  }
  return finish();
}

}  // namespace gencache
