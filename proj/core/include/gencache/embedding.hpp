#ifndef GENCACHE_EMBEDDING_HPP
#define GENCACHE_EMBEDDING_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gencache {

class ResponseDoc;

/// Fixed-dimension real vector. Embedder output is either all-zero or unit
/// length (within 1e-6).
struct Embedding {
  std::vector<double> values;

  Embedding() = default;
  explicit Embedding(std::size_t dims) : values(dims, 0.0) {}
  explicit Embedding(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dims() const noexcept { return values.size(); }
  bool is_zero() const noexcept;
  double norm() const noexcept;

  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Scales `e` to unit L2 norm in place; the zero vector stays zero.
void normalize(Embedding& e) noexcept;

/// Cosine similarity. Returns 0 if either side is the zero vector.
/// Throws std::invalid_argument on a dimension mismatch.
double cosine(const Embedding& a, const Embedding& b);

/// Raised by remote embedders on transport failure. Callers may retry.
class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EmbedderKind { kHashedLocal, kRemote };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::kHashedLocal;
  std::size_t dims = 384;
  std::optional<std::string> endpoint;  // remote only
  int timeout_ms = 5000;

  /// Throws std::invalid_argument if dims < 8 or a remote config has no endpoint.
  void validate() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t dims() const noexcept = 0;
  virtual Embedding embed(std::string_view text) const = 0;

  /// Default implementation embeds one text at a time.
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const;
};

/// Deterministic bag-of-tokens embedder: ASCII-lowercase, split on runs of
/// non-alphanumeric bytes, FNV-1a hash each token into `dims` buckets as a
/// plain count, then L2-normalize.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dims = 384);

  std::size_t dims() const noexcept override { return dims_; }
  Embedding embed(std::string_view text) const override;

  static std::uint64_t hash_token(std::string_view token) noexcept;
  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dims_;
};

/// Speaks `POST {endpoint}/embed {"texts":[...]} -> {"vectors":[[...],...]}`.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string endpoint, std::size_t dims, int timeout_ms = 5000);

  std::size_t dims() const noexcept override { return dims_; }
  Embedding embed(std::string_view text) const override;
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  std::string endpoint_;
  std::size_t dims_;
  int timeout_ms_;
};

std::shared_ptr<Embedder> make_embedder(const EmbedderConfig& config);

/// One embedding per response value in document order. Plain responses give
/// a single embedding; an empty structured document gives none.
std::vector<Embedding> embed_response_values(const Embedder& embedder, const ResponseDoc& response);

}  // namespace gencache

#endif  // GENCACHE_EMBEDDING_HPP
