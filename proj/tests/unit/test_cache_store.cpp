#include <doctest.h>

#include <algorithm>
#include <list>
#include <random>

#include "gencache/cache_store.hpp"

using namespace gencache;

namespace {

// Program whose serialized size grows with `pad`.
CompiledProgram program(std::size_t pad = 0) {
  ProgramSource s;
  s.structural_regex = "x" + std::string(pad, 'y');
  s.rules = {{"(?<a>.+)", ResponseTemplate::plain("{a}")}};
  return compile(s, 1 << 20);
}

CacheStoreConfig limits(std::size_t entries, std::size_t bytes) {
  CacheStoreConfig c;
  c.max_entries = entries;
  c.max_total_bytes = bytes;
  return c;
}

std::vector<ClusterId> ids(const CacheStore& c) {
  std::vector<ClusterId> out;
  for (const auto& e : c.entries_lru_order()) out.push_back(e.cluster_id);
  return out;
}

// Straightforward list-based LRU used as the reference.
struct ReferenceLru {
  std::size_t max_entries, max_bytes;
  std::list<std::pair<ClusterId, std::size_t>> order;  // front = LRU
  std::size_t bytes = 0;

  std::vector<ClusterId> put(ClusterId id, std::size_t size) {
    erase(id);
    order.emplace_back(id, size);
    bytes += size;
    std::vector<ClusterId> evicted;
    while (!order.empty() && (order.size() > max_entries || bytes > max_bytes)) {
      evicted.push_back(order.front().first);
      bytes -= order.front().second;
      order.pop_front();
    }
    return evicted;
  }
  bool get(ClusterId id) {
    auto it = std::find_if(order.begin(), order.end(), [&](auto& p) { return p.first == id; });
    if (it == order.end()) return false;
    order.splice(order.end(), order, it);
    return true;
  }
  bool erase(ClusterId id) {
    auto it = std::find_if(order.begin(), order.end(), [&](auto& p) { return p.first == id; });
    if (it == order.end()) return false;
    bytes -= it->second;
    order.erase(it);
    return true;
  }
  std::vector<ClusterId> ids() const {
    std::vector<ClusterId> out;
    for (auto& p : order) out.push_back(p.first);
    return out;
  }
};

}  // namespace

TEST_CASE("cache config validation") {
  CHECK_THROWS_AS(CacheStore(limits(0, 10)), std::invalid_argument);
  CHECK_THROWS_AS(CacheStore(limits(10, 0)), std::invalid_argument);
}

TEST_CASE("LRU on insertion order") {
  CacheStore c(limits(2, 1 << 20));
  CHECK(c.put(1, program()).empty());
  CHECK(c.put(2, program()).empty());
  CHECK(c.put(3, program()) == std::vector<ClusterId>{1});
  CHECK(ids(c) == std::vector<ClusterId>{2, 3});
}

TEST_CASE("get refreshes recency") {
  CacheStore c(limits(2, 1 << 20));
  c.put(1, program());
  c.put(2, program());
  REQUIRE(c.get(1));
  CHECK(c.put(3, program()) == std::vector<ClusterId>{2});
  CHECK(c.get(1)->hits == 2);
  CHECK_FALSE(c.peek(2));
}

TEST_CASE("peek does not refresh recency") {
  CacheStore c(limits(2, 1 << 20));
  c.put(1, program());
  c.put(2, program());
  REQUIRE(c.peek(1));
  CHECK(c.put(3, program()) == std::vector<ClusterId>{1});
}

TEST_CASE("byte budget") {
  auto small = program(0).size_bytes();
  CacheStore c(limits(100, small * 2 + 10));
  c.put(1, program());
  c.put(2, program());
  CHECK(c.total_bytes() == 2 * small);
  CHECK(c.put(3, program()) == std::vector<ClusterId>{1});
  CHECK(c.total_bytes() == 2 * small);
  // Larger than the whole budget: everything goes, including itself.
  auto evicted = c.put(4, program(small * 3));
  CHECK(evicted == std::vector<ClusterId>{2, 3, 4});
  CHECK(c.size() == 0);
  CHECK(c.total_bytes() == 0);
}

TEST_CASE("replacing an entry bumps the generation") {
  CacheStore c;
  c.put(7, program());
  auto g1 = c.peek(7)->generation;
  c.put(7, program(3));
  auto e = c.peek(7);
  CHECK(e->generation > g1);
  CHECK(c.size() == 1);
  CHECK(c.total_bytes() == program(3).size_bytes());
  CHECK_FALSE(c.delete_generation(7, g1));
  CHECK(c.delete_generation(7, e->generation));
  CHECK(c.size() == 0);
}

TEST_CASE("delete_for_feedback is idempotent") {
  CacheStore c;
  c.put(1, program());
  CHECK(c.delete_for_feedback(1));
  CHECK_FALSE(c.delete_for_feedback(1));
  CHECK(c.total_bytes() == 0);
}

TEST_CASE("randomized sequences match the reference LRU") {
  std::vector<CompiledProgram> programs;
  for (std::size_t pad = 0; pad < 8; ++pad) programs.push_back(program(pad * 40));
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    std::mt19937_64 rng(seed);
    std::size_t max_entries = 2 + rng() % 8;
    std::size_t max_bytes = programs[0].size_bytes() * (2 + rng() % 10);
    CacheStore c(limits(max_entries, max_bytes));
    ReferenceLru ref{max_entries, max_bytes, {}, 0};
    std::vector<ClusterId> all_evicted, ref_evicted;
    for (int step = 0; step < 600; ++step) {
      ClusterId id = rng() % 16;
      switch (rng() % 4) {
        case 0:
        case 1: {
          auto& p = programs[rng() % programs.size()];
          auto got = c.put(id, p);
          auto want = ref.put(id, p.size_bytes());
          all_evicted.insert(all_evicted.end(), got.begin(), got.end());
          ref_evicted.insert(ref_evicted.end(), want.begin(), want.end());
          break;
        }
        case 2:
          CHECK(c.get(id).has_value() == ref.get(id));
          break;
        case 3:
          CHECK(c.delete_for_feedback(id) == ref.erase(id));
          break;
      }
      REQUIRE(ids(c) == ref.ids());
      REQUIRE(c.total_bytes() == ref.bytes);
      REQUIRE(c.size() <= max_entries);
      REQUIRE(c.total_bytes() <= max_bytes);
    }
    CHECK(all_evicted == ref_evicted);
  }
}
