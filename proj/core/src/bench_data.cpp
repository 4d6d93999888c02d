#include <boost/regex.hpp>
#include <random>
#include <set>
#include <stdexcept>

#include "assets.hpp"
#include "gencache/bench.hpp"

namespace gencache::bench {

// ---------------------------------------------------------------------------
// Catalog

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

int parse_int(std::string_view s, std::size_t lineno) {
  try {
    std::size_t used = 0;
    int v = std::stoi(std::string(s), &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("catalog line " + std::to_string(lineno) + ": bad number \"" + std::string(s) + "\"");
}

}  // namespace

std::vector<CatalogItem> parse_catalog(std::string_view text) {
  std::vector<CatalogItem> items;
  std::size_t lineno = 0;
  for (auto line : split(text, '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split(line, '\t');
    auto fail = [&](const std::string& why) {
      return std::invalid_argument("catalog line " + std::to_string(lineno) + ": " + why);
    };
    if (cols.size() != 4) throw fail("expected 4 tab-separated columns");
    CatalogItem item;
    item.noun = std::string(cols[0]);
    for (auto a : split(cols[1], '|')) {
      if (!a.empty()) item.attributes.emplace_back(a);
    }
    item.min_price = parse_int(cols[2], lineno);
    item.max_price = parse_int(cols[3], lineno);
    if (item.noun.empty() || item.attributes.empty()) throw fail("noun and attributes must be non-empty");
    if (item.min_price < 5 || item.max_price < item.min_price) throw fail("bad price range");
    items.push_back(std::move(item));
  }
  return items;
}

const std::vector<CatalogItem>& default_catalog() {
  static const std::vector<CatalogItem> catalog = parse_catalog(assets::bench_catalog());
  return catalog;
}

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::kParamOnly:
      return "param-only";
    case Family::kParamWithSynonym:
      return "param-w-synonym";
    case Family::kStructural:
      return "structural";
  }
  return "param-only";
}

std::optional<Family> parse_family(std::string_view name) noexcept {
  for (auto f : {Family::kParamOnly, Family::kParamWithSynonym, Family::kStructural}) {
    if (name == to_string(f)) return f;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

struct Draw {
  std::size_t item_id;
  std::string attribute;
  std::string noun;
  std::string price;

  std::string item() const { return attribute + " " + noun; }
};

// Draws (attribute noun, price) tuples with no repeats.
class Drawer {
 public:
  explicit Drawer(std::uint64_t seed) : rng_(seed) {}

  Draw next() {
    const auto& catalog = default_catalog();
    for (int attempt = 0; attempt < 1000; ++attempt) {
      auto id = std::uniform_int_distribution<std::size_t>(0, catalog.size() - 1)(rng_);
      const auto& c = catalog[id];
      const auto& attr = c.attributes[std::uniform_int_distribution<std::size_t>(0, c.attributes.size() - 1)(rng_)];
      int steps = (c.max_price - c.min_price) / 5;
      int price = c.min_price + 5 * std::uniform_int_distribution<int>(0, steps)(rng_);
      Draw d{id, attr, c.noun, std::to_string(price)};
      if (used_.insert(d.item() + "\t" + d.price).second) return d;
    }
    throw std::runtime_error("catalog exhausted: cannot draw more unique (item, price) pairs");
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

bool chance(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

std::string article_for(std::string_view word) {
  char c = word.empty() ? 'x' : word.front();
  return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an " : "a ";
}

constexpr std::array<std::string_view, kStructuralTemplateCount> kStructuralTemplates = {
    "For under {price} dollars, I want {item}",
    "My spending cap is {price} dollars and I need {item}",
    "Show me {item} that costs no more than {price} dollars",
    "Looking for {item} priced below {price} dollars",
    "{item} is what I need, and I can spend up to {price} dollars",
    "With {price} dollars to spend, I would like {item}",
    "Can you help me shop for {item}? My limit is {price} dollars",
    "I need {item} for less than {price} dollars",
    "Please locate {item} costing at most {price} dollars",
    "Spending no more than {price} dollars, I would like to order {item}",
};

std::string fill(std::string_view tmpl, const std::string& item, const std::string& price) {
  std::string out(tmpl);
  auto replace = [&](std::string_view key, const std::string& value) {
    auto pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), value);
  };
  replace("{item}", item);
  replace("{price}", price);
  return out;
}

}  // namespace

std::vector<SyntheticInstruction> gen_param_only(std::size_t n, std::uint64_t seed) {
  Drawer drawer(seed);
  std::vector<SyntheticInstruction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = drawer.next();
    SyntheticInstruction s;
    s.family = Family::kParamOnly;
    s.seed_item_id = d.item_id;
    s.ground_truth = {d.item(), d.price};
    s.text = "I want to buy " + d.item() + ", under the price range of " + d.price + " dollars";
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticInstruction> gen_param_w_synonym(std::size_t n, std::uint64_t seed) {
  Drawer drawer(seed);
  auto& rng = drawer.rng();
  // Same order as kSynonymVerbs.
  std::discrete_distribution<std::size_t> verb_dist({30, 15, 15, 15, 17, 8});
  std::vector<SyntheticInstruction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = drawer.next();
    std::string verb(kSynonymVerbs[verb_dist(rng)]);
    std::string prefix = chance(rng, 0.2) ? "please " : "";
    bool split_sentence = chance(rng, 0.1);
    bool article = verb != "i want to buy" && chance(rng, 0.3);

    SyntheticInstruction s;
    s.family = Family::kParamWithSynonym;
    s.seed_item_id = d.item_id;
    s.ground_truth = {d.item(), d.price};
    if (split_sentence) {
      static constexpr std::array<std::string_view, 3> kFollowUp = {"need", "want", "get"};
      auto follow = kFollowUp[std::uniform_int_distribution<std::size_t>(0, kFollowUp.size() - 1)(rng)];
      s.text = prefix + verb + " " + (article ? article_for(d.noun) : "") + d.noun + ". " + std::string(follow) +
               " it in " + d.attribute + ", under the price range of " + d.price + " dollars";
      s.variant = 1;
    } else {
      s.text = prefix + verb + " " + (article ? article_for(d.item()) : "") + d.item() +
               ", under the price range of " + d.price + " dollars";
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticInstruction> gen_structural(std::size_t n, std::uint64_t seed) {
  Drawer drawer(seed);
  auto& rng = drawer.rng();
  std::vector<SyntheticInstruction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = drawer.next();
    auto t = std::uniform_int_distribution<std::size_t>(0, kStructuralTemplateCount - 1)(rng);
    SyntheticInstruction s;
    s.family = Family::kStructural;
    s.seed_item_id = d.item_id;
    s.ground_truth = {d.item(), d.price};
    s.text = fill(kStructuralTemplates[t], d.item(), d.price);
    s.variant = static_cast<int>(t);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticInstruction> generate(Family family, std::size_t n, std::uint64_t seed) {
  switch (family) {
    case Family::kParamOnly:
      return gen_param_only(n, seed);
    case Family::kParamWithSynonym:
      return gen_param_w_synonym(n, seed);
    case Family::kStructural:
      return gen_structural(n, seed);
  }
  return {};
}

std::vector<SyntheticInstruction> render_structural_variants(const GroundTruth& truth, std::size_t seed_item_id) {
  std::vector<SyntheticInstruction> out;
  for (std::size_t t = 0; t < kStructuralTemplateCount; ++t) {
    SyntheticInstruction s;
    s.family = Family::kStructural;
    s.seed_item_id = seed_item_id;
    s.ground_truth = truth;
    s.text = fill(kStructuralTemplates[t], truth.item, truth.price);
    s.variant = static_cast<int>(t);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt / response formats

std::string_view system_message() {
  static constexpr std::string_view kText =
      "You are a web navigation assistant that operates an online shopping website on behalf of a customer. "
      "You read the customer's request and plan the browser actions that lead to a suitable product page. "
      "The available actions are: go to a website, type a query into the search box together with an optional "
      "price filter, open a result from the result list, and press enter. Always start from the home page of "
      "amazon.com. Put the full product description, including every attribute the customer mentioned such as "
      "color, size or material, into the search query. If the customer states a spending limit, apply it as the "
      "maximum price filter. Reply with a single line that lists the numbered actions in order and nothing else. "
      "Keep the wording of the product description close to the customer's wording and do not add brands the "
      "customer did not mention.";
  return kText;
}

PromptRecord make_prompt(const SyntheticInstruction& instruction, std::string id) {
  PromptRecord p;
  p.id = std::move(id);
  p.user_text = instruction.text;
  p.full_text = std::string(system_message()) + "\n\nInstruction: " + instruction.text;
  return p;
}

std::string render_agent_response(const GroundTruth& truth) {
  return "actions: (1) go to amazon.com, (2) search(\"" + truth.item + "\") with a price filter of at most " +
         truth.price + " dollars, (3) open the first matching result and press enter";
}

std::optional<GroundTruth> parse_agent_response(std::string_view response) {
  static const boost::regex re(R"re(search\("(.*)"\) with a price filter of at most (\S+) dollars)re",
                               boost::regex::perl | boost::regex::icase);
  boost::match_results<std::string_view::const_iterator> m;
  if (!boost::regex_search(response.begin(), response.end(), m, re)) return std::nullopt;
  return GroundTruth{m[1].str(), m[2].str()};
}

std::string normalize_value(std::string_view value) {
  std::string out;
  bool space = false;
  for (unsigned char c : value) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  if (out.size() > 3 && out.compare(out.size() - 3, 3, ".00") == 0) out.resize(out.size() - 3);
  return out;
}

namespace {

using Match = boost::match_results<std::string_view::const_iterator>;

bool full_match(std::string_view text, const boost::regex& re, Match& m) {
  return boost::regex_match(text.begin(), text.end(), m, re);
}

constexpr auto kIcase = boost::regex::perl | boost::regex::icase;

std::optional<GroundTruth> extract_param_only(std::string_view text) {
  static const boost::regex re(R"(I want to buy (.+), under the price range of (\d+) dollars)", kIcase);
  Match m;
  if (!full_match(text, re, m)) return std::nullopt;
  return GroundTruth{m[1].str(), m[2].str()};
}

std::optional<GroundTruth> extract_synonym(std::string_view text) {
  static const std::string verbs = "i want to buy|buy|purchase|find me|i am looking for|get";
  static const boost::regex split_re("(?:please )?(?:" + verbs +
                                         R"() (?:an? )?([^.]+)\. (?:need|want|get) it in (.+), under the price range of (\d+) dollars)",
                                     kIcase);
  static const boost::regex plain_re(
      "(?:please )?(?:" + verbs + R"() (?:an? )?([^.]+), under the price range of (\d+) dollars)", kIcase);
  Match m;
  if (full_match(text, split_re, m)) return GroundTruth{m[2].str() + " " + m[1].str(), m[3].str()};
  if (full_match(text, plain_re, m)) return GroundTruth{m[1].str(), m[2].str()};
  return std::nullopt;
}

std::optional<GroundTruth> extract_structural(std::string_view text) {
  static const std::vector<boost::regex> res = [] {
    std::vector<boost::regex> out;
    for (auto t : kStructuralTemplates) {
      std::string pattern;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t.substr(i, 6) == "{item}") {
          pattern += "(?<item>.+)";
          i += 5;
        } else if (t.substr(i, 7) == "{price}") {
          pattern += R"((?<price>\d+))";
          i += 6;
        } else if (std::string_view("\\^$.|?*+()[]{}").find(t[i]) != std::string_view::npos) {
          pattern += '\\';
          pattern += t[i];
        } else {
          pattern += t[i];
        }
      }
      out.emplace_back(pattern, kIcase);
    }
    return out;
  }();
  Match m;
  for (const auto& re : res) {
    if (full_match(text, re, m)) return GroundTruth{m["item"].str(), m["price"].str()};
  }
  return std::nullopt;
}

}  // namespace

std::optional<GroundTruth> extract_ground_truth(Family family, std::string_view instruction_text) {
  switch (family) {
    case Family::kParamOnly:
      return extract_param_only(instruction_text);
    case Family::kParamWithSynonym:
      return extract_synonym(instruction_text);
    case Family::kStructural:
      return extract_structural(instruction_text);
  }
  return std::nullopt;
}

bool is_positive_hit(const SyntheticInstruction& instruction, std::string_view response_text) {
  auto got = parse_agent_response(response_text);
  if (!got) return false;
  return normalize_value(got->item) == normalize_value(instruction.ground_truth.item) &&
         normalize_value(got->price) == normalize_value(instruction.ground_truth.price);
}

}  // namespace gencache::bench
