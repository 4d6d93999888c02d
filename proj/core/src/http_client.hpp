#ifndef GENCACHE_SRC_HTTP_CLIENT_HPP
#define GENCACHE_SRC_HTTP_CLIENT_HPP

#include <stdexcept>
#include <string>

namespace gencache::detail {

class HttpClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// POSTs a JSON body to `{endpoint}{path}` and returns the response body.
/// `endpoint` is "http://host:port[/prefix]". Throws HttpClientError on
/// connection failure or a non-2xx status.
std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                      int timeout_ms);

}  // namespace gencache::detail

#endif  // GENCACHE_SRC_HTTP_CLIENT_HPP
