#ifndef GENCACHE_LLM_HPP
#define GENCACHE_LLM_HPP

#include <cstddef>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gencache {

enum class ChatRole { kSystem, kUser, kAssistant };

std::string_view to_string(ChatRole role) noexcept;
/// Throws std::invalid_argument for unknown roles.
ChatRole parse_chat_role(std::string_view role);

struct ChatMessage {
  ChatRole role = ChatRole::kUser;
  std::string content;
};

struct TokenUsage {
  long long input = 0;
  long long output = 0;

  TokenUsage& operator+=(const TokenUsage& o) noexcept {
    input += o.input;
    output += o.output;
    return *this;
  }
};

struct Completion {
  std::string text;
  TokenUsage usage;
};

/// Backend failed to produce a completion (network, protocol, exhausted script).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Throws TransportError.
  virtual Completion complete(const std::vector<ChatMessage>& messages) = 0;
};

/// ceil(bytes / 4).
long long estimate_tokens(std::string_view text) noexcept;
long long estimate_tokens(const std::vector<ChatMessage>& messages) noexcept;

/// Replays canned replies in order; a call past the end throws TransportError.
/// Token counts come from estimate_tokens.
class ScriptedBackend final : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies);

  Completion complete(const std::vector<ChatMessage>& messages) override;

  std::size_t calls() const;
  std::vector<std::vector<ChatMessage>> requests() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::vector<std::vector<ChatMessage>> requests_;
};

/// Adapts a callable; usage is estimated from the messages and the reply.
class FunctionBackend final : public LlmBackend {
 public:
  using Fn = std::function<std::string(const std::vector<ChatMessage>&)>;

  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

  Completion complete(const std::vector<ChatMessage>& messages) override;

 private:
  Fn fn_;
};

/// `POST {endpoint}/chat {"model":..,"messages":[{role,content}]}` ->
/// `{"text":..,"usage":{"input_tokens":..,"output_tokens":..}}`.
class HttpChatBackend final : public LlmBackend {
 public:
  HttpChatBackend(std::string endpoint, std::string model, int timeout_ms = 60000);

  Completion complete(const std::vector<ChatMessage>& messages) override;

 private:
  std::string endpoint_;
  std::string model_;
  int timeout_ms_;
};

}  // namespace gencache

#endif  // GENCACHE_LLM_HPP
