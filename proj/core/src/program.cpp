#include "gencache/program.hpp"

#include <unistd.h>

#include <algorithm>
#include <boost/regex.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "subprocess.hpp"

namespace gencache {

ResponseTemplate ResponseTemplate::plain(std::string text) {
  ResponseTemplate t;
  t.kind = ResponseKind::kPlain;
  t.text = std::move(text);
  return t;
}

ResponseTemplate ResponseTemplate::structured(std::vector<std::pair<std::string, std::string>> entries) {
  ResponseTemplate t;
  t.kind = ResponseKind::kStructured;
  t.entries = std::move(entries);
  return t;
}

std::string ExecResult::reason() const {
  if (auto* n = std::get_if<ExecNull>(&outcome)) return n->reason;
  if (auto* e = std::get_if<ExecError>(&outcome)) return e->reason;
  return {};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kKindDeclarative = "declarative";
constexpr std::string_view kKindScript = "external-script";

ordered_json template_to_json(const ResponseTemplate& t) {
  if (t.kind == ResponseKind::kPlain) return t.text;
  ordered_json o = ordered_json::object();
  for (const auto& [k, v] : t.entries) o[k] = v;
  return o;
}

}  // namespace

std::string serialize_program(const ProgramSource& source) {
  ordered_json j;
  j["version"] = source.version;
  j["kind"] = source.kind == ProgramKind::kDeclarative ? kKindDeclarative : kKindScript;
  j["structural_regex"] = source.structural_regex;
  if (source.kind == ProgramKind::kDeclarative) {
    j["rules"] = ordered_json::array();
    for (const auto& r : source.rules) {
      ordered_json rule;
      rule["match_regex"] = r.match_regex;
      rule["response"] = template_to_json(r.response);
      j["rules"].push_back(std::move(rule));
    }
  } else {
    j["runtime_command"] = source.runtime_command;
    j["script"] = source.script;
  }
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

namespace {

std::string require_string(const ordered_json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ProgramError(where, std::string("missing \"") + key + "\"");
  if (!it->is_string()) throw ProgramError(where + "." + key, "expected a string");
  return it->get<std::string>();
}

}  // namespace

ProgramSource parse_program(std::string_view document) {
  ordered_json j = ordered_json::parse(document.begin(), document.end(), nullptr, false);
  if (j.is_discarded()) throw ProgramError("", "program document is not valid JSON");
  if (!j.is_object()) throw ProgramError("", "program document must be an object");

  ProgramSource s;
  if (auto it = j.find("version"); it != j.end()) {
    if (!it->is_number_integer()) throw ProgramError("version", "expected an integer");
    s.version = it->get<int>();
    if (s.version != kProgramFormatVersion) {
      throw ProgramError("version", "unsupported program format version " + std::to_string(s.version));
    }
  }
  if (auto it = j.find("kind"); it != j.end()) {
    if (!it->is_string()) throw ProgramError("kind", "expected a string");
    auto k = it->get<std::string>();
    if (k == kKindDeclarative) {
      s.kind = ProgramKind::kDeclarative;
    } else if (k == kKindScript) {
      s.kind = ProgramKind::kExternalScript;
    } else {
      throw ProgramError("kind", "unknown program kind \"" + k + "\"");
    }
  }
  s.structural_regex = require_string(j, "structural_regex", "program");

  if (s.kind == ProgramKind::kExternalScript) {
    s.script = require_string(j, "script", "program");
    s.runtime_command = require_string(j, "runtime_command", "program");
    return s;
  }

  auto rules = j.find("rules");
  if (rules == j.end() || !rules->is_array()) throw ProgramError("rules", "expected an array of rules");
  for (std::size_t i = 0; i < rules->size(); ++i) {
    const auto& r = (*rules)[i];
    std::string where = "rules[" + std::to_string(i) + "]";
    if (!r.is_object()) throw ProgramError(where, "expected an object");
    PatternRule rule;
    rule.match_regex = require_string(r, "match_regex", where);
    auto resp = r.find("response");
    if (resp == r.end()) throw ProgramError(where, "missing \"response\"");
    if (resp->is_string()) {
      rule.response = ResponseTemplate::plain(resp->get<std::string>());
    } else if (resp->is_object()) {
      std::vector<std::pair<std::string, std::string>> entries;
      for (auto e = resp->begin(); e != resp->end(); ++e) {
        if (!e.value().is_string()) throw ProgramError(where + ".response." + e.key(), "expected a string template");
        entries.emplace_back(e.key(), e.value().get<std::string>());
      }
      rule.response = ResponseTemplate::structured(std::move(entries));
    } else {
      throw ProgramError(where + ".response", "expected a string or an object of strings");
    }
    s.rules.push_back(std::move(rule));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Regex helpers

namespace {

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Walks `pattern` outside character classes, calling `on_group(pos)` at every
// unescaped '('.
template <typename Fn>
void scan_groups(std::string_view pattern, Fn on_group) {
  bool in_class = false;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    char c = pattern[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (in_class) {
      if (c == ']') in_class = false;
      continue;
    }
    if (c == '[') {
      in_class = true;
      // A ']' right after '[' or '[^' is literal.
      if (i + 1 < pattern.size() && pattern[i + 1] == '^') ++i;
      if (i + 1 < pattern.size() && pattern[i + 1] == ']') ++i;
      continue;
    }
    if (c == '(') on_group(i);
  }
}

// Name of a named group opening at `pos`, if any.
std::optional<std::string> group_name_at(std::string_view p, std::size_t pos) {
  std::size_t i = pos + 1;
  if (i >= p.size() || p[i] != '?') return std::nullopt;
  ++i;
  if (i < p.size() && p[i] == 'P') ++i;
  if (i >= p.size()) return std::nullopt;
  char close;
  if (p[i] == '<') {
    close = '>';
  } else if (p[i] == '\'') {
    close = '\'';
  } else {
    return std::nullopt;
  }
  ++i;
  std::size_t start = i;
  while (i < p.size() && is_name_char(p[i])) ++i;
  if (i == start || i >= p.size() || p[i] != close) return std::nullopt;  // includes (?<= and (?<!
  return std::string(p.substr(start, i - start));
}

// Rewrites Python-only syntax: (?P<name>...) and (?P=name).
std::string to_engine_syntax(std::string_view pattern) {
  std::string out;
  out.reserve(pattern.size());
  std::size_t copied = 0;
  scan_groups(pattern, [&](std::size_t pos) {
    if (pattern.substr(pos, 4) == "(?P<") {
      out.append(pattern.substr(copied, pos - copied));
      out += "(?<";
      copied = pos + 4;
    } else if (pattern.substr(pos, 4) == "(?P=") {
      auto end = pattern.find(')', pos);
      if (end == std::string_view::npos) return;
      out.append(pattern.substr(copied, pos - copied));
      out += "\\k<";
      out.append(pattern.substr(pos + 4, end - pos - 4));
      out += ">";
      copied = end + 1;
    }
  });
  out.append(pattern.substr(copied));
  return out;
}

boost::regex compile_regex(std::string_view pattern, const std::string& location) {
  try {
    return boost::regex(to_engine_syntax(pattern), boost::regex::perl | boost::regex::icase | boost::regex::mod_s);
  } catch (const boost::regex_error& e) {
    throw ProgramError(location, std::string("invalid regex: ") + e.what());
  }
}

struct Segment {
  bool placeholder = false;
  std::string text;  // literal text or group name
};
using CompiledTemplate = std::vector<Segment>;

CompiledTemplate compile_template(std::string_view t, const std::set<std::string>& groups, const std::string& where) {
  CompiledTemplate out;
  std::string literal;
  for (std::size_t i = 0; i < t.size(); ++i) {
    char c = t[i];
    if (c == '{' && i + 1 < t.size() && t[i + 1] == '{') {
      literal += '{';
      ++i;
    } else if (c == '}' && i + 1 < t.size() && t[i + 1] == '}') {
      literal += '}';
      ++i;
    } else if (c == '{') {
      auto end = t.find('}', i);
      if (end == std::string_view::npos) throw ProgramError(where, "unterminated placeholder");
      std::string name(t.substr(i + 1, end - i - 1));
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_name_char)) {
        throw ProgramError(where, "invalid placeholder {" + name + "}");
      }
      if (!groups.count(name)) throw ProgramError(where, "placeholder {" + name + "} names no capture group");
      if (!literal.empty()) out.push_back({false, std::exchange(literal, {})});
      out.push_back({true, std::move(name)});
      i = end;
    } else if (c == '}') {
      throw ProgramError(where, "unmatched '}' (write '}}' for a literal brace)");
    } else {
      literal += c;
    }
  }
  if (!literal.empty()) out.push_back({false, std::move(literal)});
  return out;
}

std::string render(const CompiledTemplate& t, const boost::smatch& m) {
  std::string out;
  for (const auto& s : t) {
    if (!s.placeholder) {
      out += s.text;
    } else {
      const auto& sub = m[s.text];
      if (sub.matched) out += sub.str();
    }
  }
  return out;
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

}  // namespace

std::vector<std::string> named_groups(std::string_view pattern) {
  std::vector<std::string> names;
  scan_groups(pattern, [&](std::size_t pos) {
    if (auto n = group_name_at(pattern, pos)) names.push_back(std::move(*n));
  });
  return names;
}

// ---------------------------------------------------------------------------
// Compilation

struct CompiledRule {
  boost::regex regex;
  ResponseKind kind;
  CompiledTemplate plain;
  std::vector<std::pair<std::string, CompiledTemplate>> entries;
};

struct CompiledProgram::Impl {
  ProgramSource source;
  std::string canonical;
  boost::regex structural;
  std::vector<CompiledRule> rules;
  std::filesystem::path script_path;
  std::vector<std::string> argv;  // with the script path substituted; prompt appended per call

  ~Impl() {
    if (!script_path.empty()) {
      std::error_code ec;
      std::filesystem::remove(script_path, ec);
    }
  }
};

const ProgramSource& CompiledProgram::source() const noexcept { return impl_->source; }
std::size_t CompiledProgram::size_bytes() const noexcept { return impl_->canonical.size(); }
const std::string& CompiledProgram::canonical() const noexcept { return impl_->canonical; }

namespace {

std::filesystem::path write_script(const std::string& text) {
  auto dir = std::filesystem::temp_directory_path();
  std::string pattern = (dir / "gencache-script-XXXXXX").string();
  int fd = ::mkstemp(pattern.data());
  if (fd < 0) throw ProgramError("script", "cannot create temporary script file");
  ::close(fd);
  std::ofstream out(pattern, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ProgramError("script", "cannot write temporary script file");
  return pattern;
}

}  // namespace

CompiledProgram compile(const ProgramSource& source, std::size_t max_bytes) {
  auto impl = std::make_shared<CompiledProgram::Impl>();
  impl->source = source;
  impl->canonical = serialize_program(source);
  if (impl->canonical.size() > max_bytes) {
    throw ProgramError("program", "program is " + std::to_string(impl->canonical.size()) + " bytes, limit is " +
                                      std::to_string(max_bytes));
  }
  if (source.version != kProgramFormatVersion) {
    throw ProgramError("version", "unsupported program format version " + std::to_string(source.version));
  }
  impl->structural = compile_regex(source.structural_regex, "structural_regex");

  if (source.kind == ProgramKind::kDeclarative) {
    if (source.rules.empty()) throw ProgramError("rules", "a declarative program needs at least one rule");
    for (std::size_t i = 0; i < source.rules.size(); ++i) {
      const auto& r = source.rules[i];
      std::string where = "rules[" + std::to_string(i) + "]";
      CompiledRule cr;
      cr.regex = compile_regex(r.match_regex, where + ".match_regex");
      auto names = named_groups(r.match_regex);
      std::set<std::string> groups(names.begin(), names.end());
      cr.kind = r.response.kind;
      if (r.response.kind == ResponseKind::kPlain) {
        cr.plain = compile_template(r.response.text, groups, where + ".response");
      } else {
        std::set<std::string> keys;
        for (const auto& [k, v] : r.response.entries) {
          if (!keys.insert(k).second) throw ProgramError(where + ".response." + k, "duplicate response key");
          cr.entries.emplace_back(k, compile_template(v, groups, where + ".response." + k));
        }
      }
      impl->rules.push_back(std::move(cr));
    }
  } else {
    auto argv = split_command(source.runtime_command);
    if (argv.empty()) throw ProgramError("runtime_command", "empty runtime command");
    if (std::find(argv.begin(), argv.end(), "{script}") == argv.end()) {
      throw ProgramError("runtime_command", "runtime command must contain {script}");
    }
    impl->script_path = write_script(source.script);
    for (auto& a : argv) {
      if (a == "{script}") a = impl->script_path.string();
    }
    impl->argv = std::move(argv);
  }
  return CompiledProgram(std::move(impl));
}

bool structural_match(const CompiledProgram& program, std::string_view prompt_text) {
  if (prompt_text.empty()) return false;
  try {
    std::string text(prompt_text);
    return boost::regex_search(text, program.impl_->structural);
  } catch (const std::exception&) {
    return false;  // regex complexity limit
  }
}

// ---------------------------------------------------------------------------
// Execution

namespace {

std::string_view trim(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

ExecResult run_declarative(const CompiledProgram::Impl& impl, std::string_view prompt_text) {
  std::string text(prompt_text);
  boost::smatch m;
  for (const auto& rule : impl.rules) {
    if (!boost::regex_search(text, m, rule.regex)) continue;
    if (rule.kind == ResponseKind::kPlain) return {ResponseDoc::plain(render(rule.plain, m))};
    std::vector<ResponseDoc::Entry> entries;
    entries.reserve(rule.entries.size());
    for (const auto& [k, t] : rule.entries) entries.emplace_back(k, render(t, m));
    return {ResponseDoc::structured(std::move(entries))};
  }
  return {ExecNull{"no rule matched"}};
}

ExecResult run_script(const CompiledProgram::Impl& impl, std::string_view prompt_text, const ExecLimits& limits) {
  if (prompt_text.find('\0') != std::string_view::npos) return {ExecError{"prompt contains a NUL byte"}};
  auto argv = impl.argv;
  argv.emplace_back(prompt_text);
  auto r = detail::run_process(argv, limits.timeout, limits.max_output_bytes);
  using Status = detail::ProcessResult::Status;
  switch (r.status) {
    case Status::kSpawnFailed:
      return {ExecError{r.error}};
    case Status::kTimeout:
      return {ExecError{"timeout"}};
    case Status::kOverflow:
      return {ExecError{"output too large"}};
    case Status::kSignaled:
      return {ExecError{"killed by signal " + std::to_string(r.exit_code)}};
    case Status::kExited:
      break;
  }
  auto out = trim(r.output);
  if (out == "None") return {ExecNull{"program returned None"}};
  if (out.substr(0, 4) == "None" && out.size() > 4 && (out[4] == ':' || out[4] == ' ' || out[4] == '\n')) {
    auto reason = trim(out.substr(5));
    return {ExecError{reason.empty() ? std::string("program returned None") : std::string(reason)}};
  }
  if (r.exit_code != 0) return {ExecError{"exit status " + std::to_string(r.exit_code)}};
  return {parse_response(out)};
}

}  // namespace

ExecResult execute(const CompiledProgram& program, std::string_view prompt_text, const ExecLimits& limits) {
  try {
    const auto& impl = *program.impl_;
    if (impl.source.kind == ProgramKind::kDeclarative) return run_declarative(impl, prompt_text);
    return run_script(impl, prompt_text, limits);
  } catch (const std::exception& e) {
    return {ExecError{e.what()}};
  } catch (...) {
    return {ExecError{"unknown failure"}};
  }
}

bool sanity_check(const ExecResult& result, std::size_t expected_arity) {
  if (!result.is_response()) return false;
  const auto& r = result.response();
  if (expected_arity == 0) return sanity_check(result, ResponseKind::kPlain, 1);
  return sanity_check(result, ResponseKind::kStructured, expected_arity) && r.is_structured();
}

bool sanity_check(const ExecResult& result, ResponseKind kind, std::size_t arity) {
  if (!result.is_response()) return false;
  const auto& r = result.response();
  if (r.kind() != kind || r.value_count() != arity) return false;
  for (auto v : r.values()) {
    if (trim(v).empty()) return false;
  }
  return true;
}

void set_max_concurrent_processes(std::size_t n) { detail::set_process_cap(n); }

}  // namespace gencache
