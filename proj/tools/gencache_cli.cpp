#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "gencache/bench.hpp"
#include "gencache/config.hpp"
#include "gencache/program.hpp"
#include "gencache/runtime.hpp"
#include "gencache/service.hpp"

namespace {

using namespace gencache;

std::atomic<HttpService*> g_service{nullptr};

void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

int run_serve(const std::string& config_path) {
  ServiceConfig cfg;
  try {
    cfg = load_config(config_path);
    cfg.validate();
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  set_max_concurrent_processes(cfg.max_processes);

  auto embedder = make_embedder(cfg.embedder);
  const auto& codegen_endpoint = cfg.codegen_endpoint.empty() ? cfg.backend_endpoint : cfg.codegen_endpoint;
  auto codegen = std::make_shared<HttpChatBackend>(codegen_endpoint, cfg.codegen_model);
  auto validator = std::make_shared<HttpChatBackend>(codegen_endpoint, cfg.codegen_model);
  auto backend = std::make_shared<HttpChatBackend>(cfg.backend_endpoint, cfg.backend_model);
  auto runtime = std::make_shared<Runtime>(cfg.runtime_config(), embedder, codegen, validator);

  if (std::filesystem::exists(cfg.data_dir)) {
    try {
      runtime->restore(cfg.data_dir);
      spdlog::info("restored {} clusters from {}", runtime->clusters().size(), cfg.data_dir.string());
    } catch (const std::exception& e) {
      spdlog::error("cannot restore {}: {}", cfg.data_dir.string(), e.what());
      return 1;
    }
  }

  HttpService service(runtime, backend);
  auto [host, port] = split_listen_address(cfg.listen);
  int bound = service.bind(host, port);
  if (bound < 0) {
    spdlog::error("cannot listen on {}", cfg.listen);
    return 1;
  }
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("listening on {}:{}", host, bound);
  service.listen_after_bind();
  g_service = nullptr;

  spdlog::info("shutting down");
  runtime->shutdown();
  try {
    runtime->snapshot(cfg.data_dir);
  } catch (const std::exception& e) {
    spdlog::error("snapshot to {} failed: {}", cfg.data_dir.string(), e.what());
    return 1;
  }
  return 0;
}

struct BenchArgs {
  std::string dataset;
  std::size_t n = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  std::string report;
  bench::BenchConfig config;
};

int run_bench(const BenchArgs& args) {
  auto family = bench::parse_family(args.dataset);
  auto strategy = bench::parse_strategy(args.strategy);
  // CLI11 validators already restrict both values.
  if (!family || !strategy) return 2;
  try {
    args.config.codegen.validate();
    args.config.thresholds.validate();
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return 2;
  }

  auto instructions = bench::generate(*family, args.n, args.seed);
  auto report = bench::run_strategy(*strategy, *family, instructions, args.seed, args.config);
  auto doc = bench::report_to_json(report);
  if (args.report.empty()) {
    std::cout << doc << '\n';
  } else {
    std::ofstream out(args.report, std::ios::binary | std::ios::trunc);
    out << doc << '\n';
    if (!out) {
      spdlog::error("cannot write {}", args.report);
      return 1;
    }
    std::cout << fmt::format("{} on {} (n={}, seed={}): hit rate {:.2f}%, negative hits {}, codegen calls {}\n",
                             bench::to_string(report.strategy), bench::to_string(report.family), report.n,
                             report.seed, report.hit_rate, report.negative_hits, report.codegen_calls);
  }
  return 0;
}

// Offline runtime used to read and rewrite snapshots; it never calls a model.
std::unique_ptr<Runtime> offline_runtime(std::size_t dims) {
  RuntimeConfig rc;
  rc.workers = 0;
  auto never = std::make_shared<FunctionBackend>([](const std::vector<ChatMessage>&) -> std::string {
    throw TransportError("offline");
  });
  return std::make_unique<Runtime>(rc, std::make_shared<HashedEmbedder>(dims), never, never);
}

int run_inspect(const std::filesystem::path& dir, std::size_t dims) {
  if (!std::filesystem::is_directory(dir)) {
    spdlog::error("{} is not a directory", dir.string());
    return 1;
  }
  auto rt = offline_runtime(dims);
  try {
    rt->restore(dir);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (const auto& c : rt->clusters()) {
    clusters.push_back({{"id", c.id},
                        {"size", c.size},
                        {"sealed", c.sealed},
                        {"has_cache", c.has_cache},
                        {"retries_used", c.retries_used}});
  }
  nlohmann::ordered_json cache = nlohmann::ordered_json::array();
  for (const auto& e : rt->cache_store().entries_lru_order()) {
    cache.push_back({{"cluster_id", e.cluster_id}, {"size", e.size_bytes}, {"generation", e.generation}});
  }
  nlohmann::ordered_json doc = {{"clusters", clusters}, {"cache", cache}};
  std::cout << doc.dump(2) << '\n';
  return 0;
}

// Loads `from` (which validates every record) and writes it to `to`.
int run_copy(const std::filesystem::path& from, const std::filesystem::path& to, std::size_t dims) {
  if (!std::filesystem::is_directory(from)) {
    spdlog::error("{} is not a directory", from.string());
    return 1;
  }
  auto rt = offline_runtime(dims);
  try {
    rt->restore(from);
    rt->snapshot(to);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  std::cout << fmt::format("wrote {} clusters and {} cache entries to {}\n", rt->clusters().size(),
                           rt->cache_store().size(), to.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("gencache"));
  CLI::App app{"Generative response cache for LLM services"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "Config file (key = value lines)")->required();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Run a synthetic cache benchmark");
  bench_cmd->add_option("--dataset", bench_args.dataset, "Instruction family")
      ->required()
      ->check(CLI::IsMember({"param-only", "param-w-synonym", "structural"}));
  bench_cmd->add_option("--n", bench_args.n, "Number of requests")->required()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--strategy", bench_args.strategy, "Cache strategy")
      ->required()
      ->check(CLI::IsMember({"exact", "semantic", "gencache", "gencache-feedback"}));
  bench_cmd->add_option("--seed", bench_args.seed, "Dataset seed")->required();
  bench_cmd->add_option("--report", bench_args.report, "Write the JSON report here (default: stdout)");
  bench_cmd->add_option("--nu", bench_args.config.codegen.nu, "Exemplars per cluster before codegen")
      ->capture_default_str();
  bench_cmd->add_option("--gamma", bench_args.config.codegen.gamma_percent, "Acceptance percentage")
      ->capture_default_str();
  bench_cmd->add_option("--rho", bench_args.config.codegen.rho, "Codegen attempts per cluster")
      ->capture_default_str();
  bench_cmd->add_option("--window", bench_args.config.window, "Cost-ratio sampling window")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string data_dir, out_dir, from_dir;
  std::size_t dims = 384;
  auto* inspect = app.add_subcommand("inspect", "Print the clusters and cache index of a data directory");
  inspect->add_option("--data-dir", data_dir, "Snapshot directory")->required();
  inspect->add_option("--dims", dims, "Embedding dimensions")->capture_default_str();

  auto* snapshot = app.add_subcommand("snapshot", "Copy a data directory to a verified snapshot");
  snapshot->add_option("--data-dir", data_dir, "Source data directory")->required();
  snapshot->add_option("--out", out_dir, "Snapshot destination")->required();
  snapshot->add_option("--dims", dims, "Embedding dimensions")->capture_default_str();

  auto* restore = app.add_subcommand("restore", "Replace a data directory with a snapshot");
  restore->add_option("--from", from_dir, "Snapshot directory")->required();
  restore->add_option("--data-dir", data_dir, "Destination data directory")->required();
  restore->add_option("--dims", dims, "Embedding dimensions")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*serve) return run_serve(config_path);
    if (*bench_cmd) return run_bench(bench_args);
    if (*inspect) return run_inspect(data_dir, dims);
    if (*snapshot) return run_copy(data_dir, out_dir, dims);
    if (*restore) return run_copy(from_dir, data_dir, dims);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}
