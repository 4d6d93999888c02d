#ifndef GENCACHE_CONFIG_HPP
#define GENCACHE_CONFIG_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gencache/cache_store.hpp"
#include "gencache/clustering.hpp"
#include "gencache/codegen.hpp"
#include "gencache/embedding.hpp"
#include "gencache/runtime.hpp"

namespace gencache {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything `gencache serve` needs. Defaults: nu=4, gamma=50, rho=30,
/// T^p=0.8, T^r=0.75.
struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  EmbedderConfig embedder{};
  std::string backend_endpoint;  // miss-path model
  std::string backend_model = "gpt-4o";
  std::string codegen_endpoint;  // empty: same as backend_endpoint
  std::string codegen_model = "gpt-4o";
  CodegenConfig codegen{};
  ClusterThresholds thresholds{};
  CacheStoreConfig cache{};
  std::filesystem::path data_dir = "gencache-data";
  std::size_t workers = 2;
  std::size_t max_processes = 8;

  void validate() const;
  RuntimeConfig runtime_config() const;

  friend bool operator==(const ServiceConfig&, const ServiceConfig&);
};

/// Parses the flat `key = value` format (`#` comments, blank lines ignored).
/// Unknown keys and bad values throw ConfigError.
ServiceConfig parse_config(std::string_view text);
/// Applies GENCACHE_<KEY> environment overrides, where KEY is the config key
/// upper-cased with `.` replaced by `_` (e.g. GENCACHE_CODEGEN_NU).
void apply_env_overrides(ServiceConfig& config);
/// Reads the file, then applies environment overrides. Throws ConfigError.
ServiceConfig load_config(const std::filesystem::path& path);
/// Every key, one per line, in a stable order; parse_config reads it back.
std::string serialize_config(const ServiceConfig& config);

/// Host and port from "host:port".
std::pair<std::string, int> split_listen_address(std::string_view listen);

}  // namespace gencache

#endif  // GENCACHE_CONFIG_HPP
