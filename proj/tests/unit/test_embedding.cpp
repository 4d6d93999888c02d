#include <doctest.h>

#include <cmath>
#include <random>

#include "gencache/embedding.hpp"
#include "gencache/prompt.hpp"
#include "helpers.hpp"

using namespace gencache;

TEST_CASE("hashed embedder: empty text is the zero vector") {
  HashedEmbedder e(64);
  auto v = e.embed("");
  CHECK(v.dims() == 64);
  CHECK(v.is_zero());
  CHECK(e.embed("  ,;!! ").is_zero());
}

TEST_CASE("hashed embedder: deterministic and unit length") {
  HashedEmbedder e;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (int j = 0; j < 40; ++j) s += static_cast<char>(rng() % 95 + 32);
    auto a = e.embed(s), b = e.embed(s);
    CHECK(a == b);
    CHECK(a.dims() == 384);
    if (!a.is_zero()) CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("hashed embedder: repeated tokens are a scalar multiple") {
  HashedEmbedder e(8);
  CHECK(cosine(e.embed("buy buy"), e.embed("buy")) == doctest::Approx(1.0));
}

TEST_CASE("hashed embedder: case and punctuation insensitive") {
  HashedEmbedder e;
  CHECK(e.embed("Buy, the CABLE!") == e.embed("buy the cable"));
  auto toks = HashedEmbedder::tokenize("usb-c Cable  x2");
  CHECK(toks == std::vector<std::string>{"usb", "c", "cable", "x2"});
}

TEST_CASE("cosine edge cases") {
  auto a = test::unit(4, 0), b = test::unit(4, 1);
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, b) == doctest::Approx(0.0));
  CHECK(cosine(Embedding(4), a) == 0.0);
  CHECK_THROWS_AS(cosine(a, Embedding(5)), std::invalid_argument);
}

TEST_CASE("embed_response_values: one embedding per value") {
  HashedEmbedder e;
  CHECK(embed_response_values(e, parse_response(R"({"action":"search","arg":"usb cable"})")).size() == 2);
  CHECK(embed_response_values(e, parse_response("click buy now")).size() == 1);
  CHECK(embed_response_values(e, ResponseDoc::structured({})).empty());
}

TEST_CASE("embedder config validation") {
  EmbedderConfig c;
  CHECK_NOTHROW(c.validate());
  c.dims = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dims = 64;
  c.kind = EmbedderKind::kRemote;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.endpoint = "http://127.0.0.1:9";
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("remote embedder: transport failure is an embedding error") {
  RemoteEmbedder r("http://127.0.0.1:1", 16, 200);
  CHECK_THROWS_AS(r.embed("hello"), EmbeddingError);
}
