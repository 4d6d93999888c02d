#include "http_client.hpp"

#include <httplib.h>

namespace gencache::detail {

namespace {

struct Target {
  std::string base;    // scheme://host:port
  std::string prefix;  // path prefix, no trailing slash
};

Target split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = endpoint.find('/', host_start);
  Target t;
  if (path_start == std::string::npos) {
    t.base = endpoint;
  } else {
    t.base = endpoint.substr(0, path_start);
    t.prefix = endpoint.substr(path_start);
    while (!t.prefix.empty() && t.prefix.back() == '/') t.prefix.pop_back();
  }
  if (scheme_end == std::string::npos) t.base = "http://" + t.base;
  return t;
}

}  // namespace

std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                      int timeout_ms) {
  auto target = split_endpoint(endpoint);
  httplib::Client client(target.base);
  auto sec = timeout_ms / 1000;
  auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  auto res = client.Post(target.prefix + path, body, "application/json");
  if (!res) {
    throw HttpClientError("POST " + target.base + target.prefix + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpClientError("POST " + target.base + target.prefix + path + " returned HTTP " +
                          std::to_string(res->status));
  }
  return res->body;
}

}  // namespace gencache::detail
