#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "gencache/config.hpp"
#include "helpers.hpp"

using namespace gencache;

TEST_CASE("defaults") {
  ServiceConfig c;
  CHECK(c.codegen.nu == 4);
  CHECK(c.codegen.gamma_percent == 50.0);
  CHECK(c.codegen.rho == 30);
  CHECK(c.thresholds.t_prompt == 0.8);
  CHECK(c.thresholds.t_response == 0.75);
}

TEST_CASE("parse: comments, blanks and values") {
  auto c = parse_config(R"(
# service
listen = 0.0.0.0:9000
backend.endpoint = http://127.0.0.1:7000
codegen.nu = 6
codegen.gamma = 70.5
codegen.mode = external-script
codegen.runtime_command = python3 -I {script}
codegen.byte_equal_shortcut = false
exec.timeout_ms = 1500
thresholds.prompt = 0.85
embedder.kind = hashed
)");
  CHECK(c.listen == "0.0.0.0:9000");
  CHECK(c.codegen.nu == 6);
  CHECK(c.codegen.gamma_percent == 70.5);
  CHECK(c.codegen.mode == ProgramKind::kExternalScript);
  CHECK(c.codegen.runtime_command == "python3 -I {script}");
  CHECK_FALSE(c.codegen.byte_equal_shortcut);
  CHECK(c.codegen.exec_limits.timeout.count() == 1500);
  CHECK(c.thresholds.t_prompt == 0.85);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parse: errors name the line") {
  auto expect_error = [](const char* text, const char* fragment) {
    try {
      parse_config(text);
      FAIL("expected ConfigError for " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_error("\nbogus.key = 1\n", "line 2");
  expect_error("codegen.nu = four\n", "codegen.nu");
  expect_error("no equals sign\n", "line 1");
  expect_error("codegen.mode = jit\n", "codegen.mode");
  expect_error("codegen.byte_equal_shortcut = maybe\n", "byte_equal_shortcut");
}

TEST_CASE("validate") {
  ServiceConfig c;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no backend
  c.backend_endpoint = "http://127.0.0.1:1";
  CHECK_NOTHROW(c.validate());
  c.listen = "nohost";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.listen = "127.0.0.1:70000";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.listen = "127.0.0.1:0";
  c.codegen.gamma_percent = 120;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("round trip: serialize then parse is the identity") {
  ServiceConfig c;
  c.backend_endpoint = "http://llm:8000";
  c.codegen.nu = 5;
  c.codegen.gamma_percent = 0.1 + 0.2;  // not exactly representable in short decimal
  c.thresholds.t_response = 0.7123456789;
  c.embedder.endpoint = "http://embed:1";
  c.cache.max_total_bytes = 123456789;
  c.data_dir = "/var/lib/gencache";
  auto text = serialize_config(c);
  auto back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
  CHECK(parse_config(serialize_config(ServiceConfig{})) == ServiceConfig{});
}

TEST_CASE("environment overrides") {
  test::TempDir dir;
  auto path = dir.path() / "gencache.conf";
  {
    std::ofstream out(path);
    out << "backend.endpoint = http://a\ncodegen.nu = 4\n";
  }
  ::setenv("GENCACHE_CODEGEN_NU", "9", 1);
  ::setenv("GENCACHE_BACKEND_ENDPOINT", "http://b", 1);
  auto c = load_config(path);
  ::unsetenv("GENCACHE_CODEGEN_NU");
  ::unsetenv("GENCACHE_BACKEND_ENDPOINT");
  CHECK(c.codegen.nu == 9);
  CHECK(c.backend_endpoint == "http://b");

  ::setenv("GENCACHE_CODEGEN_RHO", "lots", 1);
  CHECK_THROWS_AS(load_config(path), ConfigError);
  ::unsetenv("GENCACHE_CODEGEN_RHO");

  CHECK_THROWS_AS(load_config(dir.path() / "missing.conf"), ConfigError);
}

TEST_CASE("split_listen_address") {
  CHECK(split_listen_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(split_listen_address("[::1]:80").second == 80);
  CHECK_THROWS_AS(split_listen_address(":80"), ConfigError);
  CHECK_THROWS_AS(split_listen_address("host:"), ConfigError);
}
