#include <doctest.h>

#include <fstream>
#include <regex>

#include "gencache/runtime.hpp"
#include "helpers.hpp"

using namespace gencache;
using namespace gencache::test;

namespace {

struct Fixture {
  std::shared_ptr<ScriptedBackend> codegen;
  std::shared_ptr<ScriptedBackend> validator = std::make_shared<ScriptedBackend>(std::vector<std::string>{});
  FunctionBackend agent{shop_agent};
  std::unique_ptr<Runtime> runtime;

  explicit Fixture(std::vector<std::string> codegen_replies, RuntimeConfig cfg = sync_config())
      : codegen(std::make_shared<ScriptedBackend>(std::move(codegen_replies))) {
    runtime = std::make_unique<Runtime>(cfg, std::make_shared<HashedEmbedder>(), codegen, validator);
  }

  static RuntimeConfig sync_config() {
    RuntimeConfig c;
    c.workers = 0;
    c.synchronous_codegen = true;
    return c;
  }

  RequestOutcome ask(std::string_view item) {
    return runtime->handle_request(PromptRecord::from_text("", shop_prompt(item)), agent);
  }

  // Misses until the cluster has a program.
  void warm() {
    for (int i = 0; i < 4; ++i) REQUIRE(ask(kItems[i]).served_from == ServedFrom::kLlm);
    REQUIRE(runtime->clusters().size() == 1);
    REQUIRE(runtime->clusters()[0].has_cache);
  }
};

class ThrowingEmbedder final : public Embedder {
 public:
  std::size_t dims() const noexcept override { return 8; }
  Embedding embed(std::string_view) const override { throw EmbeddingError("embedding service down"); }
};

}  // namespace

TEST_CASE("cold store: served by the backend and a cluster is created") {
  Fixture f({});
  auto out = f.ask("milk");
  CHECK(out.served_from == ServedFrom::kLlm);
  CHECK(out.response_text == shop_reply("milk"));
  CHECK(out.cluster_id == ClusterId{0});
  CHECK(out.tokens.spent_input > 0);
  CHECK(f.runtime->clusters().size() == 1);
  CHECK(std::regex_match(out.request_id, std::regex("[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}")));
}

TEST_CASE("the nu-th similar miss triggers generation exactly once") {
  Fixture f({fenced(shop_program())});
  for (int i = 0; i < 3; ++i) f.ask(kItems[i]);
  CHECK(f.codegen->calls() == 0);
  f.ask(kItems[3]);
  CHECK(f.codegen->calls() == 1);
  auto m = f.runtime->metrics();
  CHECK(m.codegen_attempts == 1);
  CHECK(m.codegen_accepted == 1);
  CHECK(f.runtime->cache_store().size() == 1);
}

TEST_CASE("hits are served from the program and not stored") {
  Fixture f({fenced(shop_program())});
  f.warm();
  auto before = f.runtime->clusters()[0].size;
  auto out = f.ask("rice cooker");
  CHECK(out.served_from == ServedFrom::kCache);
  CHECK(out.response_text == shop_reply("rice cooker"));
  CHECK(out.tokens.saved_estimate == estimate_tokens(shop_prompt("rice cooker")) + estimate_tokens(out.response_text));
  CHECK(f.runtime->clusters()[0].size == before);
  auto m = f.runtime->metrics();
  CHECK(m.hits == 1);
  CHECK(m.misses == 4);
  CHECK(m.requests == 5);
  CHECK(f.runtime->cache_store().peek(0)->hits == 1);
}

TEST_CASE("structural mismatch and null results fall through to the backend") {
  Fixture f({fenced(shop_program())});
  f.warm();
  // Same prefix, no "from Amazon": the structural regex rejects it.
  auto odd = f.runtime->handle_request(PromptRecord::from_text("", std::string(kShopPrefix) + " buy milk"), f.agent);
  CHECK(odd.served_from == ServedFrom::kLlm);
}

TEST_CASE("negative feedback deletes the program, keeps the cluster and regenerates") {
  Fixture f({fenced(shop_program()), fenced(shop_program())});
  f.warm();
  auto hit = f.ask("toaster");
  REQUIRE(hit.served_from == ServedFrom::kCache);
  auto miss = f.ask("hdmi cable");
  CHECK(f.runtime->record_feedback(miss.request_id, true) == FeedbackStatus::kIgnored);
  CHECK(f.runtime->record_feedback("no-such-id", false) == FeedbackStatus::kUnknownRequest);

  // hit2 is served by the same program as hit; once that program has been
  // replaced, reports against either are stale.
  auto hit2 = f.ask("stapler");
  REQUIRE(hit2.served_from == ServedFrom::kCache);
  CHECK(f.runtime->record_feedback(hit.request_id, false, "wrong item") == FeedbackStatus::kApplied);
  CHECK(f.runtime->clusters().size() == 1);
  CHECK(f.runtime->metrics().feedback_deletions == 1);
  // Regenerated immediately from the same exemplars, with the report quoted.
  CHECK(f.codegen->calls() == 2);
  auto prompt = f.codegen->requests()[1][0].content;
  CHECK(prompt.find("toaster") != std::string::npos);
  CHECK(prompt.find("wrong item") != std::string::npos);
  CHECK(f.runtime->clusters()[0].has_cache);
  CHECK(f.runtime->clusters()[0].retries_used == 2);

  CHECK(f.runtime->record_feedback(hit.request_id, false) == FeedbackStatus::kIgnored);
  CHECK(f.runtime->record_feedback(hit2.request_id, false) == FeedbackStatus::kIgnored);
  CHECK(f.runtime->metrics().feedback_deletions == 1);
}

TEST_CASE("feedback regeneration stops at rho") {
  RuntimeConfig cfg = Fixture::sync_config();
  cfg.codegen.rho = 2;
  Fixture f({fenced(shop_program()), fenced(shop_program()), fenced(shop_program())}, cfg);
  f.warm();
  for (int round = 0; round < 3; ++round) {
    auto hit = f.ask(kItems[10 + round]);
    if (hit.served_from != ServedFrom::kCache) break;
    f.runtime->record_feedback(hit.request_id, false);
  }
  CHECK(f.codegen->calls() == 2);
  CHECK(f.runtime->clusters()[0].retries_used == 2);
  CHECK_FALSE(f.runtime->clusters()[0].has_cache);
  CHECK(f.ask("toaster").served_from == ServedFrom::kLlm);
}

TEST_CASE("background workers produce the program") {
  RuntimeConfig cfg;
  cfg.workers = 2;
  Fixture f({fenced(shop_program())}, cfg);
  for (int i = 0; i < 4; ++i) f.ask(kItems[i]);
  f.runtime->wait_idle();
  CHECK(f.ask("toaster").served_from == ServedFrom::kCache);
  f.runtime->shutdown();
  f.runtime->shutdown();
}

TEST_CASE("backend failures propagate and count as misses") {
  Fixture f({});
  ScriptedBackend down({});
  CHECK_THROWS_AS(f.runtime->handle_request(PromptRecord::from_text("", "hello"), down), TransportError);
  auto m = f.runtime->metrics();
  CHECK(m.requests == 1);
  CHECK(m.misses == 1);
  CHECK(f.runtime->clusters().empty());
}

TEST_CASE("embedding failure skips the cache") {
  RuntimeConfig cfg = Fixture::sync_config();
  FunctionBackend agent(shop_agent);
  Runtime rt(cfg, std::make_shared<ThrowingEmbedder>(), std::make_shared<ScriptedBackend>(std::vector<std::string>{}),
             std::make_shared<ScriptedBackend>(std::vector<std::string>{}));
  auto out = rt.handle_request(PromptRecord::from_text("", shop_prompt("milk")), agent);
  CHECK(out.served_from == ServedFrom::kLlm);
  CHECK_FALSE(out.cluster_id);
  CHECK(rt.clusters().empty());
}

TEST_CASE("explicit messages are sent on a miss") {
  Fixture f({});
  ScriptedBackend rec({"ok"});
  std::vector<ChatMessage> msgs{{ChatRole::kSystem, "sys"}, {ChatRole::kUser, "hi"}};
  f.runtime->handle_request(PromptRecord::from_text("", "sys\n\nhi"), msgs, rec);
  REQUIRE(rec.requests().size() == 1);
  CHECK(rec.requests()[0].size() == 2);
  CHECK(rec.requests()[0][0].content == "sys");
}

TEST_CASE("cost ratio series") {
  Metrics m;
  m.ratio_samples = {{1, 0, 0}, {50, 3, 1}, {100, 4, 2}, {200, 4, 100}};
  auto s = cost_ratio_series(m, 100);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == kRatioSentinel);
  CHECK(s[1] == doctest::Approx(2.0));
  CHECK(s[2] == doctest::Approx(0.04));
}

TEST_CASE("eviction keeps clusters and clears has_cache") {
  RuntimeConfig cfg = Fixture::sync_config();
  cfg.cache.max_entries = 1;
  ProgramSource other;
  other.structural_regex = "from ebay";
  other.rules = {{"sell (?<item>.+?) on ebay", ResponseTemplate::plain("List {item}")}};
  Fixture f({fenced(shop_program()), fenced(other)}, cfg);
  f.warm();
  auto ebay = [&](std::string_view item) {
    FunctionBackend agent([](const std::vector<ChatMessage>& m) {
      auto t = m.back().content;
      return "List " + t.substr(5, t.find(" on ebay") - 5);
    });
    return f.runtime->handle_request(PromptRecord::from_text("", "sell " + std::string(item) + " on ebay"), agent);
  };
  for (int i = 0; i < 4; ++i) ebay("old bike");
  CHECK(f.runtime->clusters().size() == 2);
  CHECK(f.runtime->cache_store().size() == 1);
  CHECK(f.runtime->metrics().evictions == 1);
  CHECK_FALSE(f.runtime->clusters()[0].has_cache);
  CHECK(f.runtime->clusters()[1].has_cache);
  CHECK(f.ask("toaster").served_from == ServedFrom::kLlm);
}

TEST_CASE("snapshot and restore answer a replayed hit identically") {
  TempDir dir;
  Fixture f({fenced(shop_program())});
  f.warm();
  auto before = f.ask("yoga mat");
  REQUIRE(before.served_from == ServedFrom::kCache);
  f.runtime->snapshot(dir.path());

  Fixture g({});
  g.runtime->restore(dir.path());
  CHECK(g.runtime->clusters().size() == 1);
  CHECK(g.runtime->clusters()[0].size == 4);
  CHECK(g.runtime->clusters()[0].retries_used == 1);
  auto after = g.ask("yoga mat");
  CHECK(after.served_from == ServedFrom::kCache);
  CHECK(after.response_text == before.response_text);
  CHECK(after.cluster_id == before.cluster_id);
  // New clusters continue the id sequence.
  FunctionBackend other([](const std::vector<ChatMessage>&) { return "unrelated"; });
  auto fresh = g.runtime->handle_request(PromptRecord::from_text("", "what is the weather"), other);
  CHECK(fresh.cluster_id == ClusterId{1});
}

TEST_CASE("restore rejects corrupt snapshots and keeps state") {
  TempDir dir;
  Fixture f({fenced(shop_program())});
  f.warm();
  f.runtime->snapshot(dir.path());
  {
    std::ofstream out(dir.path() / "clusters.jsonl", std::ios::app);
    out << "{not json\n";
  }
  Fixture g({fenced(shop_program())});
  g.warm();
  CHECK_THROWS_AS(g.runtime->restore(dir.path()), std::runtime_error);
  CHECK(g.runtime->clusters().size() == 1);
  CHECK(g.ask("toaster").served_from == ServedFrom::kCache);
}

TEST_CASE("restore of a missing directory gives an empty state") {
  TempDir dir;
  Fixture f({fenced(shop_program())});
  f.warm();
  f.runtime->restore(dir.path() / "absent");
  CHECK(f.runtime->clusters().empty());
  CHECK(f.runtime->cache_store().size() == 0);
}
