#include "gencache/llm.hpp"

#include <json.hpp>

#include "http_client.hpp"

namespace gencache {

std::string_view to_string(ChatRole role) noexcept {
  switch (role) {
    case ChatRole::kSystem:
      return "system";
    case ChatRole::kUser:
      return "user";
    case ChatRole::kAssistant:
      return "assistant";
  }
  return "user";
}

ChatRole parse_chat_role(std::string_view role) {
  if (role == "system") return ChatRole::kSystem;
  if (role == "user") return ChatRole::kUser;
  if (role == "assistant") return ChatRole::kAssistant;
  throw std::invalid_argument("unknown chat role: " + std::string(role));
}

long long estimate_tokens(std::string_view text) noexcept {
  return static_cast<long long>((text.size() + 3) / 4);
}

long long estimate_tokens(const std::vector<ChatMessage>& messages) noexcept {
  long long total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.content);
  return total;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

Completion ScriptedBackend::complete(const std::vector<ChatMessage>& messages) {
  std::lock_guard lock(mutex_);
  requests_.push_back(messages);
  if (next_ >= replies_.size()) {
    throw TransportError("scripted backend exhausted after " + std::to_string(replies_.size()) + " replies");
  }
  Completion c;
  c.text = replies_[next_++];
  c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
  return c;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

Completion FunctionBackend::complete(const std::vector<ChatMessage>& messages) {
  Completion c;
  c.text = fn_(messages);
  c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
  return c;
}

HttpChatBackend::HttpChatBackend(std::string endpoint, std::string model, int timeout_ms)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), timeout_ms_(timeout_ms) {}

Completion HttpChatBackend::complete(const std::vector<ChatMessage>& messages) {
  nlohmann::json req;
  req["model"] = model_;
  req["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    req["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  std::string body;
  try {
    body = detail::post_json(endpoint_, "/chat", req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                             timeout_ms_);
  } catch (const detail::HttpClientError& e) {
    throw TransportError(e.what());
  }
  try {
    auto doc = nlohmann::json::parse(body);
    Completion c;
    c.text = doc.at("text").get<std::string>();
    if (auto it = doc.find("usage"); it != doc.end() && it->is_object()) {
      c.usage.input = it->value("input_tokens", 0LL);
      c.usage.output = it->value("output_tokens", 0LL);
    } else {
      c.usage = {estimate_tokens(messages), estimate_tokens(c.text)};
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

}  // namespace gencache
