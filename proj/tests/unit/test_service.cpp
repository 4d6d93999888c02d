#include <doctest.h>
#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "gencache/service.hpp"
#include "helpers.hpp"

using namespace gencache;
using namespace gencache::test;
using json = nlohmann::json;

namespace {

struct ServiceFixture {
  std::shared_ptr<Runtime> runtime;
  std::shared_ptr<LlmBackend> backend;
  std::unique_ptr<HttpService> service;

  explicit ServiceFixture(std::shared_ptr<LlmBackend> b = std::make_shared<FunctionBackend>(shop_agent)) {
    RuntimeConfig cfg;
    cfg.workers = 0;
    runtime = std::make_shared<Runtime>(
        cfg, std::make_shared<HashedEmbedder>(),
        std::make_shared<ScriptedBackend>(std::vector<std::string>{fenced(shop_program())}),
        std::make_shared<ScriptedBackend>(std::vector<std::string>{}));
    backend = std::move(b);
    service = std::make_unique<HttpService>(runtime, backend);
  }

  json complete(std::string_view item) {
    auto r = service->handle_complete(json{{"prompt", shop_prompt(item)}}.dump());
    REQUIRE(r.status == 200);
    return json::parse(r.body);
  }
};

}  // namespace

TEST_CASE("complete: minimal prompt") {
  ServiceFixture f;
  auto j = f.complete("milk");
  CHECK(j["served_from"] == "llm");
  CHECK(j["response"] == shop_reply("milk"));
  CHECK(j["cluster_id"] == 0);
  CHECK(j["id"].get<std::string>().size() == 36);
  CHECK(j["timings"].contains("total_ms"));
  CHECK(j["tokens"]["spent_input"].get<long long>() > 0);
}

TEST_CASE("complete: caller supplied id and chat messages") {
  ServiceFixture f;
  json body = {{"id", "req-1"},
               {"messages", {{{"role", "system"}, {"content", "be brief"}}, {{"role", "user"}, {"content", "hi"}}}}};
  auto r = f.service->handle_complete(body.dump());
  REQUIRE(r.status == 200);
  CHECK(json::parse(r.body)["id"] == "req-1");
}

TEST_CASE("complete: malformed bodies are 400") {
  ServiceFixture f;
  for (const char* body : {"", "nope", "[]", "{}", R"({"prompt":5})", R"({"messages":[]})",
                           R"({"messages":[{"role":"robot","content":"x"}]})", R"({"messages":[{"role":"user"}]})",
                           R"({"id":7,"prompt":"x"})"}) {
    INFO(body);
    CHECK(f.service->handle_complete(body).status == 400);
  }
}

TEST_CASE("complete: backend down on a cold cache is 502") {
  ServiceFixture f(std::make_shared<ScriptedBackend>(std::vector<std::string>{}));
  auto r = f.service->handle_complete(R"({"prompt":"hello"})");
  CHECK(r.status == 502);
  CHECK(json::parse(r.body).contains("error"));
}

TEST_CASE("feedback endpoint") {
  ServiceFixture f;
  for (int i = 0; i < 4; ++i) f.complete(kItems[i]);
  auto hit = f.complete("toaster");
  REQUIRE(hit["served_from"] == "cache");

  auto positive = f.service->handle_feedback(json{{"id", hit["id"]}, {"valid", true}}.dump());
  CHECK(positive.status == 200);
  CHECK(json::parse(positive.body)["applied"] == false);

  auto negative = f.service->handle_feedback(json{{"id", hit["id"]}, {"valid", false}}.dump());
  CHECK(negative.status == 200);
  CHECK(json::parse(negative.body)["applied"] == true);

  CHECK(f.service->handle_feedback(R"({"id":"nope","valid":false})").status == 404);
  CHECK(f.service->handle_feedback(R"({"id":"x"})").status == 400);
  CHECK(f.service->handle_feedback("garbage").status == 400);
}

TEST_CASE("metrics and clusters") {
  ServiceFixture f;
  auto cold = json::parse(f.service->handle_metrics().body);
  CHECK(cold["requests"] == 0);
  CHECK(cold["hits"] == 0);
  CHECK(cold["ratio_series"].empty());

  f.complete("milk");
  auto one = json::parse(f.service->handle_metrics().body);
  CHECK(one["requests"] == 1);
  CHECK(one["misses"] == 1);
  CHECK(one["ratio_series"][0].is_null());

  auto clusters = json::parse(f.service->handle_clusters().body)["clusters"];
  CHECK(clusters.size() == f.runtime->clusters().size());
  CHECK(clusters[0]["size"] == 1);
  CHECK(clusters[0].contains("retries_used"));
}

TEST_CASE("http round trip") {
  ServiceFixture f;
  int port = f.service->bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { f.service->listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(5, 0);
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = client.Get("/v1/metrics")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  auto post = client.Post("/v1/complete", json{{"prompt", shop_prompt("milk")}}.dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  CHECK(json::parse(post->body)["served_from"] == "llm");
  auto bad = client.Post("/v1/complete", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  f.service->stop();
  server.join();
}
