#include "gencache/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace gencache {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": invalid number \"" + std::string(v) + "\"");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got \"" + std::string(v) + "\"");
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Key {
  const char* name;
  std::function<std::string(const ServiceConfig&)> get;
  std::function<void(ServiceConfig&, std::string_view)> set;
};

template <typename T, typename Member>
Key number_key(const char* name, Member member) {
  return {name,
          [member](const ServiceConfig& c) {
            const auto& value = std::invoke(member, const_cast<ServiceConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(value);
            } else {
              return std::to_string(value);
            }
          },
          [member, name](ServiceConfig& c, std::string_view v) {
            std::invoke(member, c) = parse_number<T>(name, v);
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"listen", [](const ServiceConfig& c) { return c.listen; },
       [](ServiceConfig& c, std::string_view v) { c.listen = v; }},
      {"data_dir", [](const ServiceConfig& c) { return c.data_dir.string(); },
       [](ServiceConfig& c, std::string_view v) { c.data_dir = std::string(v); }},
      number_key<std::size_t>("workers", [](ServiceConfig& c) -> auto& { return c.workers; }),
      number_key<std::size_t>("max_processes", [](ServiceConfig& c) -> auto& { return c.max_processes; }),

      {"embedder.kind",
       [](const ServiceConfig& c) { return std::string(c.embedder.kind == EmbedderKind::kRemote ? "remote" : "hashed"); },
       [](ServiceConfig& c, std::string_view v) {
         if (v == "hashed") {
           c.embedder.kind = EmbedderKind::kHashedLocal;
         } else if (v == "remote") {
           c.embedder.kind = EmbedderKind::kRemote;
         } else {
           throw ConfigError("embedder.kind: expected hashed or remote");
         }
       }},
      number_key<std::size_t>("embedder.dims", [](ServiceConfig& c) -> auto& { return c.embedder.dims; }),
      {"embedder.endpoint", [](const ServiceConfig& c) { return c.embedder.endpoint.value_or(""); },
       [](ServiceConfig& c, std::string_view v) {
         c.embedder.endpoint = v.empty() ? std::nullopt : std::optional<std::string>(std::string(v));
       }},
      number_key<int>("embedder.timeout_ms", [](ServiceConfig& c) -> auto& { return c.embedder.timeout_ms; }),

      {"backend.endpoint", [](const ServiceConfig& c) { return c.backend_endpoint; },
       [](ServiceConfig& c, std::string_view v) { c.backend_endpoint = v; }},
      {"backend.model", [](const ServiceConfig& c) { return c.backend_model; },
       [](ServiceConfig& c, std::string_view v) { c.backend_model = v; }},

      {"codegen.endpoint", [](const ServiceConfig& c) { return c.codegen_endpoint; },
       [](ServiceConfig& c, std::string_view v) { c.codegen_endpoint = v; }},
      {"codegen.model", [](const ServiceConfig& c) { return c.codegen_model; },
       [](ServiceConfig& c, std::string_view v) { c.codegen_model = v; }},
      number_key<std::size_t>("codegen.nu", [](ServiceConfig& c) -> auto& { return c.codegen.nu; }),
      number_key<double>("codegen.gamma", [](ServiceConfig& c) -> auto& { return c.codegen.gamma_percent; }),
      number_key<int>("codegen.rho", [](ServiceConfig& c) -> auto& { return c.codegen.rho; }),
      {"codegen.mode",
       [](const ServiceConfig& c) {
         return std::string(c.codegen.mode == ProgramKind::kExternalScript ? "external-script" : "declarative");
       },
       [](ServiceConfig& c, std::string_view v) {
         if (v == "declarative") {
           c.codegen.mode = ProgramKind::kDeclarative;
         } else if (v == "external-script") {
           c.codegen.mode = ProgramKind::kExternalScript;
         } else {
           throw ConfigError("codegen.mode: expected declarative or external-script");
         }
       }},
      {"codegen.byte_equal_shortcut",
       [](const ServiceConfig& c) { return std::string(c.codegen.byte_equal_shortcut ? "true" : "false"); },
       [](ServiceConfig& c, std::string_view v) {
         c.codegen.byte_equal_shortcut = parse_bool("codegen.byte_equal_shortcut", v);
       }},
      {"codegen.runtime_command", [](const ServiceConfig& c) { return c.codegen.runtime_command; },
       [](ServiceConfig& c, std::string_view v) { c.codegen.runtime_command = v; }},
      number_key<std::size_t>("codegen.max_program_bytes",
                              [](ServiceConfig& c) -> auto& { return c.codegen.max_program_bytes; }),
      {"exec.timeout_ms", [](const ServiceConfig& c) { return std::to_string(c.codegen.exec_limits.timeout.count()); },
       [](ServiceConfig& c, std::string_view v) {
         c.codegen.exec_limits.timeout = std::chrono::milliseconds(parse_number<long long>("exec.timeout_ms", v));
       }},
      number_key<std::size_t>("exec.max_output_bytes",
                              [](ServiceConfig& c) -> auto& { return c.codegen.exec_limits.max_output_bytes; }),

      number_key<double>("thresholds.prompt", [](ServiceConfig& c) -> auto& { return c.thresholds.t_prompt; }),
      number_key<double>("thresholds.response", [](ServiceConfig& c) -> auto& { return c.thresholds.t_response; }),

      number_key<std::size_t>("cache.max_entries", [](ServiceConfig& c) -> auto& { return c.cache.max_entries; }),
      number_key<std::size_t>("cache.max_total_bytes",
                              [](ServiceConfig& c) -> auto& { return c.cache.max_total_bytes; }),
  };
  return k;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

void ServiceConfig::validate() const {
  try {
    embedder.validate();
    codegen.validate();
    thresholds.validate();
    cache.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  split_listen_address(listen);
  if (backend_endpoint.empty()) throw ConfigError("backend.endpoint is required");
  if (max_processes == 0) throw ConfigError("max_processes must be positive");
  if (codegen.exec_limits.timeout.count() <= 0) throw ConfigError("exec.timeout_ms must be positive");
}

RuntimeConfig ServiceConfig::runtime_config() const {
  RuntimeConfig r;
  r.thresholds = thresholds;
  r.codegen = codegen;
  r.cache = cache;
  r.workers = workers;
  return r;
}

bool operator==(const ServiceConfig& a, const ServiceConfig& b) { return serialize_config(a) == serialize_config(b); }

ServiceConfig parse_config(std::string_view text) {
  ServiceConfig c;
  std::size_t lineno = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    auto name = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    const Key* k = find_key(name);
    if (!k) throw ConfigError("line " + std::to_string(lineno) + ": unknown key \"" + std::string(name) + "\"");
    try {
      k->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void apply_env_overrides(ServiceConfig& config) {
  for (const auto& k : keys()) {
    std::string env = "GENCACHE_";
    for (const char* p = k.name; *p; ++p) {
      char ch = *p;
      env += ch == '.' ? '_' : static_cast<char>(ch >= 'a' && ch <= 'z' ? ch - 'a' + 'A' : ch);
    }
    if (const char* v = std::getenv(env.c_str())) {
      try {
        k.set(config, trim(v));
      } catch (const ConfigError& e) {
        throw ConfigError(env + ": " + e.what());
      }
    }
  }
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto c = parse_config(ss.str());
  apply_env_overrides(c);
  return c;
}

std::string serialize_config(const ServiceConfig& config) {
  std::string out;
  for (const auto& k : keys()) {
    out += k.name;
    out += " = ";
    out += k.get(config);
    out += '\n';
  }
  return out;
}

std::pair<std::string, int> split_listen_address(std::string_view listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ConfigError("listen: expected host:port, got \"" + std::string(listen) + "\"");
  }
  int port = 0;
  auto digits = listen.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw ConfigError("listen: invalid port \"" + std::string(digits) + "\"");
  }
  return {std::string(listen.substr(0, colon)), port};
}

}  // namespace gencache
