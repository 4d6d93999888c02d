// Hot-path microbenchmarks: embedding, program execution, cluster lookup and
// a full cache hit through the runtime.

#include <benchmark/benchmark.h>

#include "gencache/clustering.hpp"
#include "gencache/program.hpp"
#include "gencache/runtime.hpp"
#include "helpers.hpp"

using namespace gencache;

namespace {

void BM_Embed(benchmark::State& state) {
  HashedEmbedder embedder(static_cast<std::size_t>(state.range(0)));
  auto text = test::shop_prompt("a pair of running shoes");
  for (auto _ : state) benchmark::DoNotOptimize(embedder.embed(text));
}
BENCHMARK(BM_Embed)->Arg(64)->Arg(384)->Arg(1024);

void BM_ExecuteDeclarative(benchmark::State& state) {
  auto program = compile(test::shop_program());
  auto text = test::shop_prompt("a pair of running shoes");
  for (auto _ : state) benchmark::DoNotOptimize(execute(program, text));
}
BENCHMARK(BM_ExecuteDeclarative);

void BM_NearestByPrompt(benchmark::State& state) {
  HashedEmbedder embedder;
  ClusterStore store(4, ClusterThresholds{});
  for (int64_t i = 0; i < state.range(0); ++i) {
    auto word = "topic" + std::to_string(i);
    std::string prompt;
    for (int k = 0; k < 8; ++k) prompt += word + " ";
    store.assign(make_exemplar(embedder, PromptRecord::from_text("", prompt + "request"),
                               ResponseDoc::plain("answer for " + word)));
  }
  auto query = embedder.embed("topic7 topic7 topic7 topic7 topic7 topic7 topic7 topic7 request");
  for (auto _ : state) benchmark::DoNotOptimize(store.nearest_by_prompt(query, 0.8));
  state.counters["clusters"] = static_cast<double>(store.size());
}
BENCHMARK(BM_NearestByPrompt)->Arg(10)->Arg(100)->Arg(1000);

void BM_RuntimeHit(benchmark::State& state) {
  RuntimeConfig cfg;
  cfg.workers = 0;
  cfg.synchronous_codegen = true;
  Runtime rt(cfg, std::make_shared<HashedEmbedder>(),
             std::make_shared<ScriptedBackend>(std::vector<std::string>{test::fenced(test::shop_program())}),
             std::make_shared<ScriptedBackend>(std::vector<std::string>{}));
  FunctionBackend agent(test::shop_agent);
  for (int i = 0; i < 4; ++i) rt.handle_request(PromptRecord::from_text("", test::shop_prompt(test::kItems[i])), agent);
  auto prompt = PromptRecord::from_text("", test::shop_prompt("a desk lamp"));
  for (auto _ : state) {
    auto out = rt.handle_request(prompt, agent);
    if (out.served_from != ServedFrom::kCache) state.SkipWithError("expected a cache hit");
  }
}
BENCHMARK(BM_RuntimeHit);

}  // namespace

BENCHMARK_MAIN();
