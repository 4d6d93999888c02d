#include "gencache/prompt.hpp"

#include <charconv>
#include <json.hpp>
#include <set>
#include <stdexcept>

namespace gencache {

PromptRecord PromptRecord::from_text(std::string id, std::string text) {
  PromptRecord p;
  p.id = std::move(id);
  p.user_text = text;
  p.full_text = std::move(text);
  p.received_at = std::chrono::system_clock::now();
  return p;
}

ResponseDoc ResponseDoc::plain(std::string text) {
  ResponseDoc d;
  d.kind_ = ResponseKind::kPlain;
  d.text_ = std::move(text);
  return d;
}

ResponseDoc ResponseDoc::structured(std::vector<Entry> entries) {
  std::set<std::string_view> seen;
  for (const auto& [k, v] : entries) {
    if (!seen.insert(k).second) throw std::invalid_argument("duplicate response key: " + k);
  }
  ResponseDoc d;
  d.kind_ = ResponseKind::kStructured;
  d.entries_ = std::move(entries);
  return d;
}

std::size_t ResponseDoc::value_count() const noexcept {
  return kind_ == ResponseKind::kStructured ? entries_.size() : 1;
}

std::vector<std::string_view> ResponseDoc::values() const {
  std::vector<std::string_view> out;
  if (kind_ == ResponseKind::kPlain) {
    out.emplace_back(text_);
  } else {
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.second);
  }
  return out;
}

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[400];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  return std::string(buf, r.ptr);
}

// Scalar -> canonical string; nullopt for arrays and objects.
std::optional<std::string> stringify_scalar(const ordered_json& v) {
  switch (v.type()) {
    case ordered_json::value_t::string:
      return v.get<std::string>();
    case ordered_json::value_t::boolean:
      return v.get<bool>() ? "true" : "false";
    case ordered_json::value_t::number_integer:
      return std::to_string(v.get<std::int64_t>());
    case ordered_json::value_t::number_unsigned:
      return std::to_string(v.get<std::uint64_t>());
    case ordered_json::value_t::number_float:
      return format_double(v.get<double>());
    case ordered_json::value_t::null:
      return "null";
    default:
      return std::nullopt;
  }
}

}  // namespace

ResponseDoc parse_response(std::string_view text) {
  auto plain = [&] { return ResponseDoc::plain(std::string(text)); };

  // Duplicate top-level keys are rejected during parsing.
  bool duplicate = false;
  std::set<std::string> keys;
  ordered_json::parser_callback_t cb = [&](int depth, ordered_json::parse_event_t event, ordered_json& parsed) {
    if (event == ordered_json::parse_event_t::key && depth == 1) {
      if (!keys.insert(parsed.get<std::string>()).second) duplicate = true;
    }
    return true;
  };
  ordered_json doc = ordered_json::parse(text.begin(), text.end(), cb, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || duplicate) return plain();

  std::vector<ResponseDoc::Entry> entries;
  entries.reserve(doc.size());
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    auto value = stringify_scalar(it.value());
    if (!value) return plain();
    entries.emplace_back(it.key(), std::move(*value));
  }
  return ResponseDoc::structured(std::move(entries));
}

std::string serialize_response(const ResponseDoc& doc) {
  if (!doc.is_structured()) return doc.text();
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : doc.entries()) j[k] = v;
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

Exemplar make_exemplar(const Embedder& embedder, PromptRecord prompt, ResponseDoc response) {
  Exemplar e;
  e.prompt_embedding = embedder.embed(prompt.full_text);
  e.response_embeddings = embed_response_values(embedder, response);
  e.prompt = std::move(prompt);
  e.response = std::move(response);
  return e;
}

}  // namespace gencache
