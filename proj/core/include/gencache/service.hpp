#ifndef GENCACHE_SERVICE_HPP
#define GENCACHE_SERVICE_HPP

#include <memory>
#include <string>
#include <string_view>

#include "gencache/llm.hpp"
#include "gencache/runtime.hpp"

namespace gencache {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

/// HTTP front end for a Runtime:
///   POST /v1/complete  {"id"?, "prompt"} or {"id"?, "messages":[{role,content}]}
///   POST /v1/feedback  {"id", "valid"}
///   GET  /v1/metrics
///   GET  /v1/clusters
/// The handle_* functions are transport independent; listen() wires them to
/// a cpp-httplib server.
class HttpService {
 public:
  HttpService(std::shared_ptr<Runtime> runtime, std::shared_ptr<LlmBackend> backend);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  HttpReply handle_complete(std::string_view body);
  HttpReply handle_feedback(std::string_view body);
  HttpReply handle_metrics() const;
  HttpReply handle_clusters() const;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool listen_after_bind();
  void stop();

 private:
  struct Server;

  std::shared_ptr<Runtime> runtime_;
  std::shared_ptr<LlmBackend> backend_;
  std::unique_ptr<Server> server_;
};

}  // namespace gencache

#endif  // GENCACHE_SERVICE_HPP
