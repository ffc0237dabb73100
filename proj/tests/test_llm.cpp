#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <string>

#include "featforge/errors.hpp"
#include "featforge/llm.hpp"

using namespace featforge;
using llm::Completion;
using llm::LlmConfig;
using llm::MockTransport;
using llm::PromptBundle;
using Reply = llm::MockTransport::Reply;

namespace {

PromptBundle bundle_for(AgentKind role) {
  PromptBundle b;
  b.role = role;
  b.system_text = "You decide between actions.";
  b.user_text = "Pick one.";
  return b;
}

}  // namespace

TEST_CASE("scripted replies come back verbatim, keyed by role and call") {
  MockTransport mock;
  mock.push_reply(AgentKind::Router, "first router reply");
  mock.push_reply(AgentKind::Router, "second router reply");
  mock.push_reply(AgentKind::Generator, "generator reply");

  LlmConfig cfg;
  Completion a = llm::complete(cfg, mock, bundle_for(AgentKind::Router));
  CHECK(a.text == "first router reply");
  CHECK(a.attempts == 1);

  // Roles consume independent scripts.
  Completion g = llm::complete(cfg, mock, bundle_for(AgentKind::Generator));
  CHECK(g.text == "generator reply");
  Completion b = llm::complete(cfg, mock, bundle_for(AgentKind::Router));
  CHECK(b.text == "second router reply");

  CHECK(mock.calls(AgentKind::Router) == 2);
  CHECK(mock.calls(AgentKind::Generator) == 1);
  CHECK(mock.calls(AgentKind::Selector) == 0);
  CHECK(mock.pending(AgentKind::Router) == 0);
}

TEST_CASE("transport faults are retried within one logical call") {
  MockTransport mock;
  mock.push_call(AgentKind::Router, {Reply::rate_limited(),
                                     Reply::rate_limited(),
                                     Reply::ok("eventually")});
  LlmConfig cfg;  // max_retries 3 -> up to 4 attempts
  Completion c = llm::complete(cfg, mock, bundle_for(AgentKind::Router));
  CHECK(c.text == "eventually");
  CHECK(c.attempts == 3);
  CHECK(mock.calls(AgentKind::Router) == 1);
  CHECK(mock.attempts(AgentKind::Router) == 3);

  mock.push_call(AgentKind::Router, {Reply::timeout(), Reply::http_error(),
                                     Reply::ok("mixed faults")});
  CHECK(llm::complete(cfg, mock, bundle_for(AgentKind::Router)).text ==
        "mixed faults");
}

TEST_CASE("an exhausted budget raises RetriesExhausted") {
  MockTransport mock;
  mock.push_call(AgentKind::Selector,
                 {Reply::rate_limited(), Reply::rate_limited(),
                  Reply::rate_limited(), Reply::rate_limited()});
  LlmConfig cfg;
  try {
    llm::complete(cfg, mock, bundle_for(AgentKind::Selector));
    FAIL("expected RetriesExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RetriesExhausted);
    CHECK(std::string(e.what()).find("4 attempts") != std::string::npos);
  }
  CHECK(mock.attempts(AgentKind::Selector) == 4);

  // Zero retries means a single attempt.
  mock.push_call(AgentKind::Selector, {Reply::timeout(), Reply::ok("late")});
  cfg.max_retries = 0;
  CHECK_THROWS_AS(llm::complete(cfg, mock, bundle_for(AgentKind::Selector)),
                  Error);
  CHECK(mock.attempts(AgentKind::Selector) == 5);
}

TEST_CASE("validator rejections consume the same retry budget") {
  MockTransport mock;
  mock.push_call(AgentKind::Generator,
                 {Reply::ok("garbage"), Reply::ok("{\"fine\": true}")});
  LlmConfig cfg;
  auto json_like = [](const std::string& t) { return t.find('{') != std::string::npos; };
  Completion c = llm::complete(cfg, mock, bundle_for(AgentKind::Generator),
                               json_like);
  CHECK(c.text == "{\"fine\": true}");
  CHECK(c.attempts == 2);

  // Two rate limits then garbage: the fourth attempt runs off the script,
  // so the whole call degrades to RetriesExhausted.
  mock.push_call(AgentKind::Generator,
                 {Reply::rate_limited(), Reply::rate_limited(),
                  Reply::ok("not json at all")});
  try {
    llm::complete(cfg, mock, bundle_for(AgentKind::Generator), json_like);
    FAIL("expected RetriesExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RetriesExhausted);
  }
}

TEST_CASE("an unscripted call fails fast") {
  MockTransport mock;
  LlmConfig cfg;
  CHECK_THROWS_AS(llm::complete(cfg, mock, bundle_for(AgentKind::Router)),
                  Error);
  CHECK(mock.calls(AgentKind::Router) == 1);
}

TEST_CASE("mock retries never sleep") {
  MockTransport mock;
  mock.push_call(AgentKind::Router,
                 {Reply::rate_limited(), Reply::rate_limited(),
                  Reply::rate_limited(), Reply::ok("ok")});
  LlmConfig cfg;
  const auto t0 = std::chrono::steady_clock::now();
  llm::complete(cfg, mock, bundle_for(AgentKind::Router));
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() <
        500);
}

TEST_CASE("usage is estimated at four characters per token") {
  CHECK(llm::estimate_tokens("") == 0);
  CHECK(llm::estimate_tokens("abcd") == 1);
  CHECK(llm::estimate_tokens("abcde") == 2);

  MockTransport mock;
  mock.push_reply(AgentKind::Router, std::string(41, 'x'));
  LlmConfig cfg;
  PromptBundle b = bundle_for(AgentKind::Router);
  Completion c = llm::complete(cfg, mock, b);
  CHECK(c.prompt_tokens == llm::estimate_tokens(b.system_text) +
                               llm::estimate_tokens(b.user_text));
  CHECK(c.reply_tokens == 11);
}

TEST_CASE("bad configurations are rejected up front") {
  MockTransport mock;
  mock.push_reply(AgentKind::Router, "unused");
  PromptBundle b = bundle_for(AgentKind::Router);

  LlmConfig cfg;
  cfg.temperature = 2.5;
  CHECK_THROWS_AS(llm::complete(cfg, mock, b), Error);
  cfg = LlmConfig{};
  cfg.max_retries = -1;
  CHECK_THROWS_AS(llm::complete(cfg, mock, b), Error);
  cfg = LlmConfig{};
  cfg.timeout_seconds = 0;
  try {
    llm::complete(cfg, mock, b);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
  CHECK(mock.calls(AgentKind::Router) == 0);  // rejected before any attempt
}
