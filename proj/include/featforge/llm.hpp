#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "featforge/memory.hpp"

namespace featforge::llm {

// Rough token estimate used for budget checks and usage accounting:
// 4 characters per token.
inline int estimate_tokens(const std::string& text) {
  return static_cast<int>((text.size() + 3) / 4);
}

// An outgoing chat request. `role` doubles as the reply-schema id: the
// mock transport scripts replies per role, and reply parsing dispatches
// on it.
struct PromptBundle {
  AgentKind role = AgentKind::Router;
  std::string system_text;
  std::string user_text;
};

struct LlmConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.2;
  int max_reply_tokens = 512;
  int timeout_seconds = 60;
  int max_retries = 3;
};

struct Completion {
  std::string text;
  int attempts = 1;
  int prompt_tokens = 0;
  int reply_tokens = 0;
};

// One chat backend. `attempt` is 0 for a fresh logical call and counts up
// across retries of the same call, so scripted transports can distinguish
// the two.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const LlmConfig& cfg, const PromptBundle& bundle,
                           int attempt) = 0;
  // Only network-backed transports pay the retry backoff.
  virtual bool wants_backoff() const { return false; }
};

// POSTs {endpoint}/chat/completions with an OpenAI-style body and reads
// choices[0].message.content. The API key comes from the FEATFORGE_API_KEY
// environment variable alone; without it the request is sent unauthenticated
// (local endpoints). Never used by the test suite.
class LiveTransport final : public Transport {
 public:
  std::string send(const LlmConfig& cfg, const PromptBundle& bundle,
                   int attempt) override;
  bool wants_backoff() const override { return true; }
};

// Deterministic transport scripted per role and call index. Each scripted
// call lists one outcome per attempt; running past the end of a call's list
// (or past the scripted calls) raises HttpError, which the retry loop turns
// into RetriesExhausted.
class MockTransport final : public Transport {
 public:
  struct Reply {
    enum class Kind { Text, RateLimited, Timeout, HttpError };
    Kind kind = Kind::Text;
    std::string text;

    static Reply ok(std::string t) { return {Kind::Text, std::move(t)}; }
    static Reply rate_limited() { return {Kind::RateLimited, {}}; }
    static Reply timeout() { return {Kind::Timeout, {}}; }
    static Reply http_error() { return {Kind::HttpError, {}}; }
  };

  // Queues the outcome sequence for the next logical call of `role`.
  void push_call(AgentKind role, std::vector<Reply> attempts);
  // Shorthand for the common single-attempt success.
  void push_reply(AgentKind role, std::string text);

  std::string send(const LlmConfig& cfg, const PromptBundle& bundle,
                   int attempt) override;

  int calls(AgentKind role) const;
  int attempts(AgentKind role) const;
  std::size_t pending(AgentKind role) const;

 private:
  struct RoleState {
    std::deque<std::vector<Reply>> queued;
    std::vector<Reply> current;
    int calls = 0;
    int attempts = 0;
  };
  std::map<AgentKind, RoleState> roles_;
};

using Validator = std::function<bool(const std::string&)>;

// Issues the request with up to max_retries + 1 attempts. Transport faults
// (Timeout, RateLimited, HttpError) and validator rejections both consume
// attempts; backoff between attempts is 1s * 2^attempt with jitter, paid
// only when the transport asks for it. Throws RetriesExhausted when the
// budget runs out and ConfigError on a bad config.
Completion complete(const LlmConfig& cfg, Transport& transport,
                    const PromptBundle& bundle,
                    const Validator& validator = {});

}  // namespace featforge::llm
