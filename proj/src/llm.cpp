#include "featforge/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "featforge/errors.hpp"
#include "featforge/rng.hpp"

namespace featforge::llm {

namespace {

const char* role_label(AgentKind role) {
  switch (role) {
    case AgentKind::Router: return "router";
    case AgentKind::Generator: return "generator";
    case AgentKind::Selector: return "selector";
  }
  return "router";
}

void check_config(const LlmConfig& cfg) {
  if (cfg.temperature < 0.0 || cfg.temperature > 2.0)
    throw Error(ErrorCode::ConfigError, "temperature must be in [0, 2]");
  if (cfg.max_retries < 0)
    throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (cfg.max_reply_tokens < 1 || cfg.timeout_seconds < 1)
    throw Error(ErrorCode::ConfigError, "reply budget and timeout must be positive");
}

// Splits "http://host:port/v1" into the client origin and the path prefix.
void split_endpoint(const std::string& endpoint, std::string& origin,
                    std::string& prefix) {
  const std::size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::ConfigError,
                "endpoint '" + endpoint + "' has no scheme");
  const std::size_t slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) {
    origin = endpoint;
    prefix.clear();
  } else {
    origin = endpoint.substr(0, slash);
    prefix = endpoint.substr(slash);
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
}

}  // namespace

std::string LiveTransport::send(const LlmConfig& cfg,
                                const PromptBundle& bundle, int attempt) {
  (void)attempt;
  std::string origin, prefix;
  split_endpoint(cfg.endpoint, origin, prefix);

  httplib::Client client(origin);
  client.set_connection_timeout(cfg.timeout_seconds, 0);
  client.set_read_timeout(cfg.timeout_seconds, 0);
  client.set_write_timeout(cfg.timeout_seconds, 0);

  httplib::Headers headers;
  if (const char* key = std::getenv("FEATFORGE_API_KEY"); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const nlohmann::json body{
      {"model", cfg.model},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system_text}},
        {{"role", "user"}, {"content", bundle.user_text}}}},
      {"temperature", cfg.temperature},
      {"max_tokens", cfg.max_reply_tokens},
  };

  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        err == httplib::Error::Read || err == httplib::Error::Write)
      throw Error(ErrorCode::Timeout,
                  "request timed out: " + httplib::to_string(err));
    throw Error(ErrorCode::HttpError,
                "request failed: " + httplib::to_string(err));
  }
  if (res->status == 429)
    throw Error(ErrorCode::RateLimited, "endpoint returned 429");
  if (res->status != 200) {
    std::ostringstream msg;
    msg << "endpoint returned status " << res->status;
    throw Error(ErrorCode::HttpError, msg.str());
  }

  const nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") ||
      reply["choices"].empty() ||
      !reply["choices"][0].contains("message"))
    throw Error(ErrorCode::HttpError, "malformed completion response body");
  return reply["choices"][0]["message"].value("content", std::string{});
}

void MockTransport::push_call(AgentKind role, std::vector<Reply> attempts) {
  roles_[role].queued.push_back(std::move(attempts));
}

void MockTransport::push_reply(AgentKind role, std::string text) {
  push_call(role, {Reply::ok(std::move(text))});
}

std::string MockTransport::send(const LlmConfig&, const PromptBundle& bundle,
                                int attempt) {
  RoleState& rs = roles_[bundle.role];
  ++rs.attempts;
  if (attempt == 0) {
    ++rs.calls;
    if (rs.queued.empty())
      throw Error(ErrorCode::HttpError,
                  std::string("mock script exhausted for ") +
                      role_label(bundle.role));
    rs.current = std::move(rs.queued.front());
    rs.queued.pop_front();
  }
  if (static_cast<std::size_t>(attempt) >= rs.current.size())
    throw Error(ErrorCode::HttpError,
                std::string("mock call script exhausted for ") +
                    role_label(bundle.role));
  const Reply& r = rs.current[static_cast<std::size_t>(attempt)];
  switch (r.kind) {
    case Reply::Kind::Text: return r.text;
    case Reply::Kind::RateLimited:
      throw Error(ErrorCode::RateLimited, "scripted rate limit");
    case Reply::Kind::Timeout:
      throw Error(ErrorCode::Timeout, "scripted timeout");
    case Reply::Kind::HttpError:
      throw Error(ErrorCode::HttpError, "scripted http error");
  }
  throw Error(ErrorCode::HttpError, "unreachable");
}

int MockTransport::calls(AgentKind role) const {
  auto it = roles_.find(role);
  return it == roles_.end() ? 0 : it->second.calls;
}

int MockTransport::attempts(AgentKind role) const {
  auto it = roles_.find(role);
  return it == roles_.end() ? 0 : it->second.attempts;
}

std::size_t MockTransport::pending(AgentKind role) const {
  auto it = roles_.find(role);
  return it == roles_.end() ? 0 : it->second.queued.size();
}

Completion complete(const LlmConfig& cfg, Transport& transport,
                    const PromptBundle& bundle, const Validator& validator) {
  check_config(cfg);
  const int max_attempts = cfg.max_retries + 1;
  std::string last_failure = "no attempts made";
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0 && transport.wants_backoff()) {
      // 1s * 2^(attempt-1) plus up to 250ms of jitter.
      const auto now = std::chrono::steady_clock::now().time_since_epoch();
      const std::uint64_t jitter =
          splitmix64(static_cast<std::uint64_t>(now.count())) % 250;
      std::this_thread::sleep_for(std::chrono::milliseconds(
          (1000u << (attempt - 1)) + jitter));
    }
    std::string text;
    try {
      text = transport.send(cfg, bundle, attempt);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::RateLimited ||
          e.code() == ErrorCode::Timeout || e.code() == ErrorCode::HttpError) {
        last_failure = e.what();
        continue;
      }
      throw;
    }
    if (validator && !validator(text)) {
      last_failure = "reply failed validation";
      continue;
    }
    Completion c;
    c.text = std::move(text);
    c.attempts = attempt + 1;
    c.prompt_tokens =
        estimate_tokens(bundle.system_text) + estimate_tokens(bundle.user_text);
    c.reply_tokens = estimate_tokens(c.text);
    return c;
  }
  std::ostringstream msg;
  msg << "gave up after " << max_attempts << " attempts; last failure: "
      << last_failure;
  throw Error(ErrorCode::RetriesExhausted, msg.str());
}

}  // namespace featforge::llm
