#include "gencache/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "gencache/prompt.hpp"
#include "http_client.hpp"

namespace gencache {

bool Embedding::is_zero() const noexcept {
  for (double v : values) {
    if (v != 0.0) return false;
  }
  return true;
}

double Embedding::norm() const noexcept {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

void normalize(Embedding& e) noexcept {
  double n = e.norm();
  if (n == 0.0) return;
  for (double& v : e.values) v /= n;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dims() != b.dims()) {
    throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.dims()) + " vs " +
                                std::to_string(b.dims()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

void EmbedderConfig::validate() const {
  if (dims < 8) throw std::invalid_argument("embedder dims must be >= 8");
  if (kind == EmbedderKind::kRemote && (!endpoint || endpoint->empty())) {
    throw std::invalid_argument("remote embedder requires an endpoint");
  }
}

std::vector<Embedding> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

// ---------------------------------------------------------------------------

HashedEmbedder::HashedEmbedder(std::size_t dims) : dims_(dims) {
  if (dims_ < 8) throw std::invalid_argument("embedder dims must be >= 8");
}

std::uint64_t HashedEmbedder::hash_token(std::string_view token) noexcept {
  // FNV-1a, 64 bit.
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences and are kept inside
// tokens so non-ASCII words still embed.
bool is_token_byte(unsigned char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char ascii_lower(unsigned char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

}  // namespace

std::vector<std::string> HashedEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      cur.push_back(ascii_lower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Embedding HashedEmbedder::embed(std::string_view text) const {
  Embedding e(dims_);
  // Tokenize inline to avoid allocating a token vector on the hot path.
  std::uint64_t h = 14695981039346656037ULL;
  bool in_token = false;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      h ^= static_cast<unsigned char>(ascii_lower(c));
      h *= 1099511628211ULL;
      in_token = true;
    } else if (in_token) {
      e.values[h % dims_] += 1.0;
      h = 14695981039346656037ULL;
      in_token = false;
    }
  }
  if (in_token) e.values[h % dims_] += 1.0;
  normalize(e);
  return e;
}

// ---------------------------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t dims, int timeout_ms)
    : endpoint_(std::move(endpoint)), dims_(dims), timeout_ms_(timeout_ms) {}

Embedding RemoteEmbedder::embed(std::string_view text) const {
  std::string s(text);
  return embed_batch(std::span<const std::string>(&s, 1)).front();
}

std::vector<Embedding> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
  nlohmann::json req;
  req["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  std::string body;
  try {
    body = detail::post_json(endpoint_, "/embed", req.dump(), timeout_ms_);
  } catch (const detail::HttpClientError& e) {
    throw EmbeddingError(e.what());
  }
  std::vector<Embedding> out;
  try {
    auto doc = nlohmann::json::parse(body);
    const auto& vectors = doc.at("vectors");
    if (!vectors.is_array() || vectors.size() != texts.size()) {
      throw EmbeddingError("embed response has " + std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
      auto values = v.get<std::vector<double>>();
      if (values.size() != dims_) {
        throw EmbeddingError("embed response vector has length " + std::to_string(values.size()) + ", expected " +
                             std::to_string(dims_));
      }
      Embedding e(std::move(values));
      normalize(e);
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embed response: ") + e.what());
  }
  return out;
}

std::shared_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
  config.validate();
  if (config.kind == EmbedderKind::kRemote) {
    return std::make_shared<RemoteEmbedder>(*config.endpoint, config.dims, config.timeout_ms);
  }
  return std::make_shared<HashedEmbedder>(config.dims);
}

std::vector<Embedding> embed_response_values(const Embedder& embedder, const ResponseDoc& response) {
  std::vector<std::string> values;
  for (auto v : response.values()) values.emplace_back(v);
  if (values.empty()) return {};
  return embedder.embed_batch(values);
}

}  // namespace gencache
