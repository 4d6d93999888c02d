#include "gencache/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

namespace gencache {

using json = nlohmann::json;

struct HttpService::Server {
  httplib::Server http;
};

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

HttpReply error_reply(int status, const std::string& message) { return {status, dump({{"error", message}})}; }

json ratio_json(double v) { return v == kRatioSentinel ? json(nullptr) : json(v); }

}  // namespace

HttpService::HttpService(std::shared_ptr<Runtime> runtime, std::shared_ptr<LlmBackend> backend)
    : runtime_(std::move(runtime)), backend_(std::move(backend)), server_(std::make_unique<Server>()) {
  if (!runtime_ || !backend_) throw std::invalid_argument("service needs a runtime and a backend");
  auto reply = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->http.Post("/v1/complete", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_complete(req.body));
  });
  server_->http.Post("/v1/feedback", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_feedback(req.body));
  });
  server_->http.Get("/v1/metrics",
                    [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_metrics()); });
  server_->http.Get("/v1/clusters",
                    [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_clusters()); });
}

HttpService::~HttpService() { stop(); }

HttpReply HttpService::handle_complete(std::string_view body) {
  auto doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return error_reply(400, "body must be a JSON object");

  PromptRecord prompt;
  std::vector<ChatMessage> messages;
  if (auto id = doc.find("id"); id != doc.end() && !id->is_null()) {
    if (!id->is_string()) return error_reply(400, "\"id\" must be a string");
    prompt.id = id->get<std::string>();
  }
  if (auto p = doc.find("prompt"); p != doc.end()) {
    if (!p->is_string()) return error_reply(400, "\"prompt\" must be a string");
    prompt.full_text = prompt.user_text = p->get<std::string>();
    messages.push_back({ChatRole::kUser, prompt.full_text});
  } else if (auto m = doc.find("messages"); m != doc.end()) {
    if (!m->is_array() || m->empty()) return error_reply(400, "\"messages\" must be a non-empty array");
    for (const auto& msg : *m) {
      if (!msg.is_object() || !msg.contains("role") || !msg.contains("content") || !msg["role"].is_string() ||
          !msg["content"].is_string()) {
        return error_reply(400, "each message needs string \"role\" and \"content\"");
      }
      ChatMessage cm;
      try {
        cm.role = parse_chat_role(msg["role"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        return error_reply(400, e.what());
      }
      cm.content = msg["content"].get<std::string>();
      if (!prompt.full_text.empty()) prompt.full_text += "\n\n";
      prompt.full_text += cm.content;
      if (cm.role == ChatRole::kUser) prompt.user_text = cm.content;
      messages.push_back(std::move(cm));
    }
  } else {
    return error_reply(400, "body needs \"prompt\" or \"messages\"");
  }
  prompt.received_at = std::chrono::system_clock::now();

  RequestOutcome out;
  try {
    out = runtime_->handle_request(std::move(prompt), messages, *backend_);
  } catch (const TransportError& e) {
    spdlog::warn("backend failure: {}", e.what());
    return error_reply(502, std::string("backend failure: ") + e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    return error_reply(500, e.what());
  }

  json j;
  j["id"] = out.request_id;
  j["response"] = out.response_text;
  j["served_from"] = to_string(out.served_from);
  j["cluster_id"] = out.cluster_id ? json(*out.cluster_id) : json(nullptr);
  j["timings"] = {{"embed_ms", out.timings.embed_ms},
                  {"cluster_search_ms", out.timings.cluster_search_ms},
                  {"regex_validate_ms", out.timings.regex_validate_ms},
                  {"program_exec_ms", out.timings.program_exec_ms},
                  {"llm_ms", out.timings.llm_ms},
                  {"db_insert_ms", out.timings.db_insert_ms},
                  {"total_ms", out.timings.total_ms()}};
  j["tokens"] = {{"spent_input", out.tokens.spent_input},
                 {"spent_output", out.tokens.spent_output},
                 {"saved_estimate", out.tokens.saved_estimate}};
  return {200, dump(j)};
}

HttpReply HttpService::handle_feedback(std::string_view body) {
  auto doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return error_reply(400, "body must be a JSON object");
  auto id = doc.find("id");
  auto valid = doc.find("valid");
  if (id == doc.end() || !id->is_string()) return error_reply(400, "\"id\" must be a string");
  if (valid == doc.end() || !valid->is_boolean()) return error_reply(400, "\"valid\" must be a boolean");
  std::string reason;
  if (auto r = doc.find("reason"); r != doc.end() && r->is_string()) reason = r->get<std::string>();

  auto status = runtime_->record_feedback(id->get<std::string>(), valid->get<bool>(), reason);
  if (status == FeedbackStatus::kUnknownRequest) return error_reply(404, "unknown request id");
  return {200, dump({{"applied", status == FeedbackStatus::kApplied}})};
}

HttpReply HttpService::handle_metrics() const {
  auto m = runtime_->metrics();
  json series = json::array();
  for (double v : cost_ratio_series(m, runtime_->config().series_window)) series.push_back(ratio_json(v));
  json j = {{"requests", m.requests},
            {"hits", m.hits},
            {"misses", m.misses},
            {"codegen_llm_calls", m.codegen_llm_calls},
            {"codegen_attempts", m.codegen_attempts},
            {"codegen_accepted", m.codegen_accepted},
            {"tokens_spent_input", m.tokens_spent_input},
            {"tokens_spent_output", m.tokens_spent_output},
            {"tokens_saved_input", m.tokens_saved_input},
            {"tokens_saved_output", m.tokens_saved_output},
            {"feedback_deletions", m.feedback_deletions},
            {"evictions", m.evictions},
            {"cache_entries", runtime_->cache_store().size()},
            {"cache_bytes", runtime_->cache_store().total_bytes()},
            {"ratio_series", series}};
  return {200, dump(j)};
}

HttpReply HttpService::handle_clusters() const {
  json arr = json::array();
  for (const auto& c : runtime_->clusters()) {
    arr.push_back({{"id", c.id},
                   {"size", c.size},
                   {"sealed", c.sealed},
                   {"has_cache", c.has_cache},
                   {"retries_used", c.retries_used},
                   {"response_kind", c.response_kind == ResponseKind::kStructured ? "structured" : "plain"},
                   {"response_arity", c.response_arity}});
  }
  return {200, dump({{"clusters", arr}})};
}

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->http.bind_to_any_port(host);
  return server_->http.bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen_after_bind() { return server_->http.listen_after_bind(); }

void HttpService::stop() {
  if (server_ && server_->http.is_running()) server_->http.stop();
}

}  // namespace gencache
