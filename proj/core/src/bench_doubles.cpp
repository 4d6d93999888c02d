#include <boost/regex.hpp>
#include <json.hpp>

#include "gencache/bench.hpp"

namespace gencache::bench {

namespace {

constexpr std::string_view kInstructionMarker = "Instruction: ";
constexpr std::string_view kReflectionMarker = "Reflection on the previous attempt:";

// Text between every `open` and the following `close`.
std::vector<std::string> blocks_between(std::string_view text, std::string_view open, std::string_view close) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto a = text.find(open, pos);
    if (a == std::string_view::npos) break;
    a += open.size();
    auto b = text.find(close, a);
    if (b == std::string_view::npos) break;
    out.emplace_back(text.substr(a, b - a));
    pos = b + close.size();
  }
  return out;
}

std::string_view instruction_of(std::string_view prompt) {
  auto pos = prompt.rfind(kInstructionMarker);
  return pos == std::string_view::npos ? prompt : prompt.substr(pos + kInstructionMarker.size());
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  return out;
}

std::string trim_copy(std::string_view s) {
  while (!s.empty() && (s.front() == '\n' || s.front() == ' ')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.remove_suffix(1);
  return std::string(s);
}

bool contains_word(std::string_view haystack, std::string_view word) {
  for (auto pos = haystack.find(word); pos != std::string_view::npos; pos = haystack.find(word, pos + 1)) {
    bool left = pos == 0 || haystack[pos - 1] == ' ';
    bool right = pos + word.size() == haystack.size() || haystack[pos + word.size()] == ' ';
    if (left && right) return true;
  }
  return false;
}

// Verb phrases seen at the start of the exemplar instructions, in order of
// first appearance.
std::vector<std::string> seen_verbs(std::span<const std::string> prompts) {
  std::vector<std::string> seen;
  for (const auto& p : prompts) {
    auto instr = lower(instruction_of(p));
    if (instr.rfind("please ", 0) == 0) instr.erase(0, 7);
    std::string best;
    for (auto v : kSynonymVerbs) {
      if (instr.rfind(v, 0) == 0 && instr.size() > v.size() && instr[v.size()] == ' ' && v.size() > best.size()) {
        best = v;
      }
    }
    if (!best.empty() && std::find(seen.begin(), seen.end(), best) == seen.end()) seen.push_back(best);
  }
  return seen;
}

std::string alternation(const std::vector<std::string>& verbs) {
  std::string out;
  for (const auto& v : verbs) {
    if (!out.empty()) out += '|';
    out += v;
  }
  return out;
}

constexpr std::string_view kStructuralRegex = R"(under the price range of \d+ dollars)";
constexpr std::size_t kMaxSynonyms = 5;

std::vector<PatternRule> rules_for(Family family, std::span<const std::string> prompts, bool reflected) {
  const std::string tail = R"(, under the price range of (?<price>\d+) dollars)";
  if (family != Family::kParamWithSynonym) {
    return {{"i want to buy (?<item>.+?)" + tail, {}}};
  }
  auto verbs = seen_verbs(prompts);
  for (auto v : kSynonymVerbs) {
    if (std::find(verbs.begin(), verbs.end(), v) == verbs.end()) verbs.emplace_back(v);
  }
  if (reflected) {
    // Anchor at the instruction start and keep the item inside one sentence.
    verbs.resize(std::min(verbs.size(), kMaxSynonyms));
    return {{"instruction: (?:please )?(?:" + alternation(verbs) + ") (?:an? )?(?<item>[^.]+?)" + tail, {}}};
  }
  // Unanchored search: a verb that contains another listed verb ("i want to
  // buy" / "buy") is redundant.
  std::vector<std::string> minimal;
  for (const auto& v : verbs) {
    bool redundant = std::any_of(verbs.begin(), verbs.end(), [&](const std::string& o) {
      return o != v && contains_word(v, o);
    });
    if (!redundant) minimal.push_back(v);
  }
  minimal.resize(std::min(minimal.size(), kMaxSynonyms));
  return {{R"(\b(?:)" + alternation(minimal) + R"()\b (?:an? )?(?<item>.+?))" + tail, {}}};
}

// Turns an exemplar response into a template by replacing the captured
// values with their placeholders.
std::optional<std::string> template_from(const PatternRule& rule, const std::string& prompt,
                                         const std::string& response) {
  boost::regex re(rule.match_regex, boost::regex::perl | boost::regex::icase | boost::regex::mod_s);
  boost::smatch m;
  if (!boost::regex_search(prompt, m, re)) return std::nullopt;
  std::string item = m["item"].str(), price = m["price"].str();
  auto ipos = response.find("\"" + item + "\"");
  if (item.empty() || ipos == std::string::npos) return std::nullopt;
  auto ppos = response.rfind("most " + price + " ");
  if (ppos == std::string::npos || ppos < ipos) return std::nullopt;
  ppos += 5;
  std::string escaped;
  auto escape = [](std::string_view s) {
    std::string out;
    for (char c : s) {
      out += c;
      if (c == '{' || c == '}') out += c;
    }
    return out;
  };
  std::string_view r(response);
  return escape(r.substr(0, ipos + 1)) + "{item}" + escape(r.substr(ipos + 1 + item.size(), ppos - ipos - 1 - item.size())) +
         "{price}" + escape(r.substr(ppos + price.size()));
}

}  // namespace

Completion AgentDouble::complete(const std::vector<ChatMessage>& messages) {
  std::string_view user;
  for (const auto& m : messages) {
    if (m.role == ChatRole::kUser) user = m.content;
  }
  auto instr = instruction_of(user);
  std::optional<GroundTruth> truth;
  for (auto f : {Family::kParamOnly, Family::kParamWithSynonym, Family::kStructural}) {
    if ((truth = extract_ground_truth(f, instr))) break;
  }
  Completion c;
  c.text = truth ? render_agent_response(*truth) : "actions: (1) go to amazon.com, (2) press enter";
  c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
  return c;
}

std::string FamilyCodegenDouble::program_for(Family family, std::span<const std::string> exemplar_prompts,
                                             bool reflected) {
  ProgramSource s;
  s.kind = ProgramKind::kDeclarative;
  s.structural_regex = kStructuralRegex;
  s.rules = rules_for(family, exemplar_prompts, reflected);
  return serialize_program(s);
}

Completion FamilyCodegenDouble::complete(const std::vector<ChatMessage>& messages) {
  std::string system;
  for (const auto& m : messages) {
    if (m.role == ChatRole::kSystem) system += m.content;
  }
  std::vector<std::string> prompts, responses;
  for (const auto& ex : blocks_between(system, "<example index=", "</example>")) {
    auto p = blocks_between(ex, "<prompt>", "</prompt>");
    auto r = blocks_between(ex, "<response>", "</response>");
    if (p.empty() || r.empty()) continue;
    prompts.push_back(trim_copy(p.front()));
    responses.push_back(trim_copy(r.front()));
  }
  bool reflected = system.find(kReflectionMarker) != std::string::npos;

  ProgramSource s;
  s.structural_regex = kStructuralRegex;
  s.rules = rules_for(family_, prompts, reflected);
  // The response template is learned from the first exemplar the rule can
  // explain; without one the program cannot be written.
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (auto t = template_from(s.rules.front(), prompts[i], responses[i])) {
      s.rules.front().response = ResponseTemplate::plain(*t);
      break;
    }
  }
  Completion c;
  if (s.rules.front().response.text.empty()) {
    c.text = "I could not find a consistent pattern in these examples.";
  } else {
    c.text = "Here is the program:\n```json\n" + serialize_program(s) + "\n```\n";
  }
  c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
  return c;
}

namespace {

std::string canonical_for_compare(std::string_view s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    char ch = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    out += ch == '\'' ? '"' : ch;
  }
  return out;
}

}  // namespace

Completion ComparingValidator::complete(const std::vector<ChatMessage>& messages) {
  std::string prompt;
  for (const auto& m : messages) prompt += m.content;
  nlohmann::json valid = nlohmann::json::array();
  std::size_t mismatches = 0;
  for (const auto& cmp : blocks_between(prompt, "<comparison index=", "</comparison>")) {
    auto g = blocks_between(cmp, "<generated>\n", "\n</generated>");
    auto t = blocks_between(cmp, "<ground_truth>\n", "\n</ground_truth>");
    bool ok = !g.empty() && !t.empty() && canonical_for_compare(g.front()) == canonical_for_compare(t.front());
    valid.push_back(ok ? 1 : 0);
    mismatches += ok ? 0 : 1;
  }
  nlohmann::json reply = {{"valid", valid},
                          {"reason", mismatches == 0 ? std::string("all outputs match")
                                                     : "mismatched values in " + std::to_string(mismatches) +
                                                           " comparison(s): the extracted item or price differs"}};
  Completion c;
  c.text = "```\n" + reply.dump() + "\n```";
  c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
  return c;
}

}  // namespace gencache::bench
