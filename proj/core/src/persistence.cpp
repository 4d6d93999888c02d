#include "persistence.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace gencache::detail {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

long long to_epoch_ms(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

std::chrono::system_clock::time_point from_epoch_ms(long long ms) {
  return std::chrono::system_clock::time_point(std::chrono::milliseconds(ms));
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

void write_file(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_snapshot(const fs::path& dir, const std::vector<Cluster>& clusters, const std::vector<CacheEntry>& entries) {
  fs::create_directories(dir);

  std::string lines;
  for (const auto& c : clusters) {
    json rec;
    rec["id"] = c.id();
    rec["retries_used"] = c.retries_used;
    rec["response_kind"] = c.response_kind() == ResponseKind::kStructured ? "structured" : "plain";
    rec["exemplars"] = json::array();
    for (const auto& e : c.exemplars()) {
      rec["exemplars"].push_back({{"id", e.prompt.id},
                                  {"prompt", e.prompt.full_text},
                                  {"user_text", e.prompt.user_text},
                                  {"received_at", to_epoch_ms(e.prompt.received_at)},
                                  {"response", serialize_response(e.response)}});
    }
    lines += dump(rec);
    lines += '\n';
  }
  write_file(dir / "clusters.jsonl", lines);

  auto cache_dir = dir / "cache";
  fs::remove_all(cache_dir);
  fs::create_directories(cache_dir / "programs");
  std::string index;
  for (const auto& e : entries) {
    auto file = "programs/" + std::to_string(e.cluster_id) + ".prog";
    write_file(cache_dir / file, e.program.canonical());
    index += dump({{"cluster_id", e.cluster_id},
                   {"file", file},
                   {"size", e.size_bytes},
                   {"created_at", to_epoch_ms(e.created_at)}});
    index += '\n';
  }
  write_file(cache_dir / "index", index);
}

LoadedState read_snapshot(const fs::path& dir, const Embedder& embedder, std::size_t nu,
                          std::size_t max_program_bytes) {
  LoadedState state;
  if (!fs::exists(dir)) return state;

  auto where = [](const fs::path& file, std::size_t line) { return file.string() + ":" + std::to_string(line); };

  auto clusters_path = dir / "clusters.jsonl";
  if (fs::exists(clusters_path)) {
    std::istringstream in(read_file(clusters_path));
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto rec = json::parse(line);
        auto id = rec.at("id").get<ClusterId>();
        bool structured = rec.at("response_kind").get<std::string>() == "structured";
        std::optional<Cluster> cluster;
        for (const auto& ex : rec.at("exemplars")) {
          PromptRecord p;
          p.id = ex.at("id").get<std::string>();
          p.full_text = ex.at("prompt").get<std::string>();
          p.user_text = ex.at("user_text").get<std::string>();
          p.received_at = from_epoch_ms(ex.value("received_at", 0LL));
          auto text = ex.at("response").get<std::string>();
          auto response = structured ? parse_response(text) : ResponseDoc::plain(text);
          if (response.is_structured() != structured) throw std::runtime_error("response kind mismatch");
          auto exemplar = make_exemplar(embedder, std::move(p), std::move(response));
          if (!cluster) {
            cluster.emplace(id, 3 * nu, std::move(exemplar));
          } else if (!cluster->add_exemplar(std::move(exemplar))) {
            spdlog::warn("{}: cluster {} exceeds its capacity; extra exemplars dropped", where(clusters_path, lineno),
                         id);
            break;
          }
        }
        if (!cluster) throw std::runtime_error("cluster has no exemplars");
        cluster->retries_used = rec.value("retries_used", 0);
        if (!state.clusters.empty() && state.clusters.back().id() >= id) {
          throw std::runtime_error("cluster ids are not strictly increasing");
        }
        state.clusters.push_back(std::move(*cluster));
      } catch (const std::exception& e) {
        throw std::runtime_error(where(clusters_path, lineno) + ": " + e.what());
      }
    }
  }

  std::set<ClusterId> known;
  for (const auto& c : state.clusters) known.insert(c.id());

  auto index_path = dir / "cache" / "index";
  if (fs::exists(index_path)) {
    std::istringstream in(read_file(index_path));
    std::size_t lineno = 0;
    std::set<ClusterId> seen;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto rec = json::parse(line);
        auto id = rec.at("cluster_id").get<ClusterId>();
        if (!known.count(id)) throw std::runtime_error("entry for unknown cluster " + std::to_string(id));
        if (!seen.insert(id).second) throw std::runtime_error("duplicate entry for cluster " + std::to_string(id));
        auto file = rec.at("file").get<std::string>();
        if (file.find("..") != std::string::npos || fs::path(file).is_absolute()) {
          throw std::runtime_error("program path escapes the cache directory");
        }
        auto text = read_file(dir / "cache" / file);
        if (text.size() != rec.at("size").get<std::size_t>()) throw std::runtime_error("program size mismatch");
        auto program = compile(parse_program(text), max_program_bytes);
        state.entries.push_back({id, std::move(program), from_epoch_ms(rec.value("created_at", 0LL))});
      } catch (const std::exception& e) {
        throw std::runtime_error(where(index_path, lineno) + ": " + e.what());
      }
    }
  }
  return state;
}

}  // namespace gencache::detail
