#include <doctest.h>

#include <cmath>
#include <random>

#include "gencache/clustering.hpp"
#include "helpers.hpp"

using namespace gencache;
using test::exemplar;
using test::unit;
using test::vec;

namespace {

ClusterThresholds thresholds(double tp, double tr) {
  ClusterThresholds t;
  t.t_prompt = tp;
  t.t_response = tr;
  return t;
}

Embedding mean_normalized(const std::vector<const Embedding*>& xs) {
  Embedding sum(xs.front()->dims());
  for (const auto* x : xs) {
    for (std::size_t i = 0; i < sum.dims(); ++i) sum.values[i] += x->values[i];
  }
  normalize(sum);
  return sum;
}

}  // namespace

TEST_CASE("prompt similarity") {
  Cluster c(0, 12, exemplar(vec({1, 2, 3}), {unit(3, 0)}));
  CHECK(prompt_similarity(c, vec({1, 2, 3})) == doctest::Approx(1.0));
  CHECK(prompt_similarity(c, Embedding(3)) == 0.0);
}

TEST_CASE("prompt similarity against a hand-computed three member centroid") {
  Cluster c(0, 12, exemplar(vec({1, 0, 0}), {unit(3, 0)}));
  REQUIRE(c.add_exemplar(exemplar(vec({0, 1, 0}), {unit(3, 0)})));
  REQUIRE(c.add_exemplar(exemplar(vec({1, 1, 0}), {unit(3, 0)})));
  // mean = (1 + 1/sqrt2, 1 + 1/sqrt2, 0) / 3 -> normalized (1/sqrt2, 1/sqrt2, 0)
  double r = 1 / std::sqrt(2.0);
  CHECK(c.prompt_centroid().values[0] == doctest::Approx(r));
  CHECK(c.prompt_centroid().values[1] == doctest::Approx(r));
  CHECK(prompt_similarity(c, vec({1, 0, 0})) == doctest::Approx(r));
  CHECK(prompt_similarity(c, vec({0, 0, 1})) == doctest::Approx(0.0));
}

TEST_CASE("response similarity: arity gate and mean of slots") {
  Cluster c(0, 12, exemplar(unit(3, 0), {unit(3, 0), unit(3, 1)}));
  CHECK_FALSE(response_similarity(c, std::vector<Embedding>{unit(3, 0)}).has_value());
  CHECK_FALSE(response_similarity(c, std::vector<Embedding>{unit(3, 0), unit(3, 1), unit(3, 2)}).has_value());
  CHECK(*response_similarity(c, std::vector<Embedding>{unit(3, 0), unit(3, 1)}) == doctest::Approx(1.0));
  CHECK(*response_similarity(c, std::vector<Embedding>{unit(3, 0), unit(3, 2)}) == doctest::Approx(0.5));
}

TEST_CASE("add_exemplar: seal at capacity, identical exemplar keeps the centroid") {
  Cluster c(0, 3, exemplar(vec({1, 2, 0}), {unit(3, 0)}));
  auto before = c.prompt_centroid();
  REQUIRE(c.add_exemplar(exemplar(vec({1, 2, 0}), {unit(3, 0)})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(c.prompt_centroid().values[i] == doctest::Approx(before.values[i]));
  REQUIRE(c.add_exemplar(exemplar(vec({0, 0, 1}), {unit(3, 1)})));
  CHECK(c.sealed());
  auto sealed_centroid = c.prompt_centroid();
  CHECK_FALSE(c.add_exemplar(exemplar(vec({1, 0, 0}), {unit(3, 0)})));
  CHECK(c.size() == 3);
  CHECK(c.prompt_centroid() == sealed_centroid);
  CHECK_THROWS_AS(Cluster(1, 3, exemplar(unit(3, 0), {unit(3, 0)})).add_exemplar(exemplar(unit(3, 0), {unit(3, 0), unit(3, 1)})),
                  std::invalid_argument);
}

TEST_CASE("incremental centroids equal the batch mean") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<Exemplar> xs;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> p(16), r(16);
    for (auto& v : p) v = g(rng);
    for (auto& v : r) v = g(rng);
    xs.push_back(exemplar(vec(p), {vec(r)}));
  }
  Cluster c(0, 100, xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    REQUIRE(c.add_exemplar(xs[k]));
    std::vector<const Embedding*> ps, rs;
    for (std::size_t i = 0; i <= k; ++i) {
      ps.push_back(&xs[i].prompt_embedding);
      rs.push_back(&xs[i].response_embeddings[0]);
    }
    auto pm = mean_normalized(ps), rm = mean_normalized(rs);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(c.prompt_centroid().values[i] == doctest::Approx(pm.values[i]).epsilon(1e-5));
      CHECK(c.response_centroids()[0].values[i] == doctest::Approx(rm.values[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("assign: first exemplar creates cluster 0, identical joins it") {
  ClusterStore s(4, thresholds(0.8, 0.75));
  auto a = s.assign(exemplar(unit(4, 0), {unit(4, 1)}));
  CHECK(a.created);
  CHECK(a.cluster_id == 0);
  auto b = s.assign(exemplar(unit(4, 0), {unit(4, 1)}));
  CHECK_FALSE(b.created);
  CHECK(b.stored);
  CHECK(b.cluster_id == 0);
  CHECK(b.s_p == doctest::Approx(1.0));
  CHECK(b.s_r == doctest::Approx(1.0));
  CHECK(s.get(0)->size() == 2);
}

TEST_CASE("assign: argmax over s_p + s_r") {
  ClusterStore s(4, thresholds(0.5, 0.5));
  // Two clusters; the query is closer to cluster 1 in response space.
  s.assign(exemplar(vec({1, 0, 0, 0}), {vec({1, 0, 0, 0})}));
  s.assign(exemplar(vec({0, 1, 0, 0}), {vec({0, 1, 0, 0})}));
  REQUIRE(s.size() == 2);
  auto q = exemplar(vec({1, 1, 0, 0}), {vec({1, 3, 0, 0})});
  double sp = 1 / std::sqrt(2.0);
  double sr0 = 1 / std::sqrt(10.0), sr1 = 3 / std::sqrt(10.0);
  REQUIRE(sp > 0.5);
  REQUIRE(sr0 < 0.5);
  auto a = s.assign(q);
  CHECK(a.cluster_id == 1);
  CHECK(a.s_p + a.s_r == doctest::Approx(sp + sr1));
}

TEST_CASE("assign: ties go to the lowest id; thresholds are strict") {
  ClusterStore s(4, thresholds(0.5, 0.5));
  s.assign(exemplar(vec({1, 0, 0}), {unit(3, 2)}));
  s.assign(exemplar(vec({0, 1, 0}), {unit(3, 2)}));
  auto a = s.assign(exemplar(vec({1, 1, 0}), {unit(3, 2)}));
  CHECK(a.cluster_id == 0);

  ClusterStore strict(4, thresholds(0.8, 0.75));
  strict.assign(exemplar(vec({1, 0}), {unit(2, 0)}));
  // s_p exactly 0.8 is not enough.
  auto b = strict.assign(exemplar(Embedding(std::vector<double>{0.8, 0.6}), {unit(2, 0)}));
  CHECK(b.created);
}

TEST_CASE("assign: response shape must match the cluster") {
  ClusterStore s(4, thresholds(0.8, 0.75));
  s.assign(exemplar(unit(3, 0), {unit(3, 0), unit(3, 1)}));
  auto a = s.assign(exemplar(unit(3, 0), {unit(3, 0)}));
  CHECK(a.created);
  CHECK(s.size() == 2);
}

TEST_CASE("assign: sealed cluster drops new members") {
  ClusterStore s(2, thresholds(0.8, 0.75));
  for (int i = 0; i < 6; ++i) CHECK(s.assign(exemplar(unit(3, 0), {unit(3, 1)})).stored);
  auto a = s.assign(exemplar(unit(3, 0), {unit(3, 1)}));
  CHECK_FALSE(a.created);
  CHECK_FALSE(a.stored);
  CHECK(s.get(0)->size() == 6);
  CHECK(s.summary(0)->sealed);
}

TEST_CASE("nearest_by_prompt") {
  ClusterStore s(4, thresholds(0.8, 0.75));
  CHECK_FALSE(s.nearest_by_prompt(unit(2, 0), 0.8));
  s.assign(exemplar(vec({1, 0}), {unit(2, 0)}));
  auto near = Embedding(std::vector<double>{0.95, std::sqrt(1 - 0.95 * 0.95)});
  CHECK(s.nearest_by_prompt(near, 0.8) == ClusterId{0});
  auto far = Embedding(std::vector<double>{0.79, std::sqrt(1 - 0.79 * 0.79)});
  CHECK_FALSE(s.nearest_by_prompt(far, 0.8));
}

TEST_CASE("retries are capped at rho") {
  ClusterStore s(4, {});
  s.assign(exemplar(unit(2, 0), {unit(2, 0)}));
  for (int i = 0; i < 3; ++i) CHECK(s.try_consume_retry(0, 3));
  CHECK_FALSE(s.try_consume_retry(0, 3));
  CHECK(s.summary(0)->retries_used == 3);
  CHECK_FALSE(s.try_consume_retry(42, 3));
}

TEST_CASE("feedback note is taken once") {
  ClusterStore s(4, {});
  s.assign(exemplar(unit(2, 0), {unit(2, 0)}));
  s.set_feedback_note(0, "wrong price");
  CHECK(s.take_feedback_note(0) == "wrong price");
  CHECK(s.take_feedback_note(0).empty());
}

TEST_CASE("load requires increasing ids and continues numbering") {
  ClusterStore s(4, {});
  std::vector<Cluster> cs;
  cs.emplace_back(3, 12, exemplar(unit(2, 0), {unit(2, 0)}));
  cs.emplace_back(7, 12, exemplar(unit(2, 1), {unit(2, 1)}));
  s.load(cs);
  CHECK(s.size() == 2);
  CHECK(s.assign(exemplar(vec({1, -1}), {unit(2, 0)})).cluster_id == 8);

  std::vector<Cluster> bad;
  bad.emplace_back(5, 12, exemplar(unit(2, 0), {unit(2, 0)}));
  bad.emplace_back(5, 12, exemplar(unit(2, 0), {unit(2, 0)}));
  CHECK_THROWS_AS(s.load(bad), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Replay against a brute-force reference that recomputes every centroid
// from the member list.

namespace {

struct RefCluster {
  std::vector<std::size_t> members;
  ResponseKind kind;
  std::size_t arity;
};

std::vector<long> reference_assign(const std::vector<Exemplar>& xs, std::size_t nu, ClusterThresholds t) {
  std::vector<RefCluster> clusters;
  std::vector<long> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    long best = -1;
    double best_score = 0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      auto& rc = clusters[c];
      std::vector<const Embedding*> ps;
      for (auto m : rc.members) ps.push_back(&xs[m].prompt_embedding);
      double sp = cosine(mean_normalized(ps), x.prompt_embedding);
      if (!(sp > t.t_prompt) || rc.kind != x.response.kind() || rc.arity != x.response_embeddings.size()) continue;
      double sr = 0;
      for (std::size_t j = 0; j < rc.arity; ++j) {
        std::vector<const Embedding*> rs;
        for (auto m : rc.members) rs.push_back(&xs[m].response_embeddings[j]);
        sr += cosine(mean_normalized(rs), x.response_embeddings[j]);
      }
      sr /= static_cast<double>(rc.arity);
      if (!(sr > t.t_response)) continue;
      if (best < 0 || sp + sr > best_score) {
        best = static_cast<long>(c);
        best_score = sp + sr;
      }
    }
    if (best < 0) {
      clusters.push_back({{i}, x.response.kind(), x.response_embeddings.size()});
      out.push_back(static_cast<long>(clusters.size() - 1));
    } else if (clusters[best].members.size() >= 3 * nu) {
      out.push_back(-1);  // dropped
    } else {
      clusters[best].members.push_back(i);
      out.push_back(best);
    }
  }
  return out;
}

std::vector<Exemplar> topic_stream(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  constexpr std::size_t dims = 24, topics = 8;
  auto random_vec = [&](double scale) {
    std::vector<double> v(dims);
    for (auto& x : v) x = g(rng) * scale;
    return v;
  };
  std::vector<std::vector<double>> pc, rc0, rc1;
  std::vector<std::size_t> arity;
  for (std::size_t k = 0; k < topics; ++k) {
    pc.push_back(random_vec(1));
    rc0.push_back(random_vec(1));
    rc1.push_back(random_vec(1));
    arity.push_back(1 + rng() % 2);
  }
  std::vector<Exemplar> xs;
  for (std::size_t i = 0; i < n; ++i) {
    auto k = rng() % topics;
    double noise = 0.15 + 0.35 * static_cast<double>(rng() % 100) / 100.0;
    auto jitter = [&](const std::vector<double>& c) {
      auto v = random_vec(noise);
      for (std::size_t d = 0; d < dims; ++d) v[d] += c[d];
      return vec(v);
    };
    std::vector<Embedding> rs{jitter(rc0[k])};
    if (arity[k] == 2) rs.push_back(jitter(rc1[k]));
    xs.push_back(exemplar(jitter(pc[k]), std::move(rs)));
  }
  return xs;
}

}  // namespace

TEST_CASE("online assignment matches the batch reference over 20 seeds") {
  auto t = thresholds(0.8, 0.75);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto xs = topic_stream(seed, 200);
    auto expected = reference_assign(xs, 4, t);
    ClusterStore s(4, t);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto a = s.assign(xs[i]);
      long got = a.stored ? static_cast<long>(a.cluster_id) : -1;
      if (got != expected[i]) ++diffs;
    }
    INFO("seed " << seed);
    CHECK(diffs == 0);
    CHECK(s.size() > 1);
  }
}
