#ifndef GENCACHE_PROMPT_HPP
#define GENCACHE_PROMPT_HPP

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gencache/embedding.hpp"

namespace gencache {

// A single request as constructed by the client. `full_text` is everything
// sent to the model (system message included); `user_text` is the variable
// instruction segment.
struct PromptRecord {
  std::string id;
  std::string full_text;
  std::string user_text;
  std::chrono::system_clock::time_point received_at{};

  /// Prompt where the whole text is the user instruction.
  static PromptRecord from_text(std::string id, std::string text);
};

enum class ResponseKind { kStructured, kPlain };

/// A model response. Structured responses are flat key/value documents with
/// unique keys kept in document order; everything else is plain text.
class ResponseDoc {
 public:
  using Entry = std::pair<std::string, std::string>;

  ResponseDoc() : kind_(ResponseKind::kPlain) {}

  static ResponseDoc plain(std::string text);
  /// Throws std::invalid_argument on duplicate keys.
  static ResponseDoc structured(std::vector<Entry> entries);

  ResponseKind kind() const noexcept { return kind_; }
  bool is_structured() const noexcept { return kind_ == ResponseKind::kStructured; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::string& text() const noexcept { return text_; }

  /// Structured: number of entries. Plain: 1.
  std::size_t value_count() const noexcept;
  /// Values in document order (the plain text for plain docs).
  std::vector<std::string_view> values() const;

  friend bool operator==(const ResponseDoc&, const ResponseDoc&) = default;

 private:
  ResponseKind kind_;
  std::vector<Entry> entries_;
  std::string text_;
};

/// Flat JSON objects become structured docs (numbers and booleans are
/// stringified, null becomes "null"); anything else, including nested
/// objects and duplicate keys, is plain. Never fails.
ResponseDoc parse_response(std::string_view text);

/// Canonical wire form: compact JSON with keys in original order and string
/// values for structured docs, the text verbatim for plain ones.
std::string serialize_response(const ResponseDoc& doc);

struct Exemplar {
  PromptRecord prompt;
  ResponseDoc response;
  Embedding prompt_embedding;
  std::vector<Embedding> response_embeddings;
};

/// Embeds the prompt's full text and each response value.
Exemplar make_exemplar(const Embedder& embedder, PromptRecord prompt, ResponseDoc response);

}  // namespace gencache

#endif  // GENCACHE_PROMPT_HPP
