#include "featforge/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "featforge/errors.hpp"

namespace featforge::agents {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

const char* router_mode_name(RouterMode m) {
  switch (m) {
    case RouterMode::Uniform: return "uniform";
    case RouterMode::Ppo: return "ppo";
    case RouterMode::Llm: return "llm";
  }
  return "uniform";
}

RouterMode router_mode_from_name(const std::string& name) {
  if (name == "uniform") return RouterMode::Uniform;
  if (name == "ppo") return RouterMode::Ppo;
  if (name == "llm") return RouterMode::Llm;
  throw Error(ErrorCode::ConfigError, "unknown router mode '" + name + "'");
}

const char* agent_mode_name(AgentMode m) {
  return m == AgentMode::Heuristic ? "heuristic" : "llm";
}

AgentMode agent_mode_from_name(const std::string& name) {
  if (name == "heuristic") return AgentMode::Heuristic;
  if (name == "llm") return AgentMode::Llm;
  throw Error(ErrorCode::ConfigError, "unknown agent mode '" + name + "'");
}

std::vector<std::string> operator_roster() {
  std::vector<std::string> roster;
  for (int i = 0; i < expr::kUnaryCount; ++i)
    roster.emplace_back(expr::unary_name(static_cast<expr::UnaryOp>(i)));
  for (int i = 0; i < expr::kBinaryCount; ++i)
    roster.emplace_back(expr::binary_symbol(static_cast<expr::BinaryOp>(i)));
  return roster;
}

AgentContext make_context(const data::Frame& frame,
                          const pipeline::FeatureSet& fs,
                          const MemoryPool& pool, int iteration,
                          AgentKind agent, bool use_short, bool use_long,
                          Rng& rng,
                          const std::map<std::string, double>& importance,
                          int remaining_steps, TaskMeta meta) {
  AgentContext ctx;
  if (meta.metric.empty())
    meta.metric =
        meta.task == data::Task::Regression ? "1-MSE" : "macro-F1";
  ctx.meta = std::move(meta);

  data::FeatureMatrix m = pipeline::materialize(fs, frame);
  ctx.live.reserve(m.n_cols());
  for (std::size_t i = 0; i < m.n_cols(); ++i) {
    FeatureSummary s;
    s.name = m.names[i];
    s.stats = data::column_stats(m.cols[i]);
    s.target_corr = data::pearson(m.cols[i], frame.target());
    ctx.live.push_back(std::move(s));
  }

  if (use_short) ctx.short_term = pool.short_term(iteration, agent);
  if (use_long && !pool.empty()) ctx.demos = pool.long_term_sample(rng);
  ctx.operators = operator_roster();
  ctx.remaining_steps = remaining_steps;
  ctx.importance = importance;
  ctx.frame = &frame;
  ctx.fs = &fs;
  return ctx;
}

// ---- prompt construction ----

namespace {

std::string role_system_text(AgentKind role) {
  switch (role) {
    case AgentKind::Router:
      return "You coordinate a tabular feature-search loop. Decide whether "
             "the next action should create new features or prune existing "
             "ones. Reply with exactly one JSON object: "
             "{\"decision\": \"generation\"|\"selection\", "
             "\"reason\": \"...\"}.";
    case AgentKind::Generator:
      return "You create features for a tabular dataset. Propose 1 to 3 new "
             "features as postfix token strings over the listed columns, "
             "for example \"f1 f2 *\" or \"f3 sin\". Reply with exactly one "
             "JSON object: {\"new_features\": [\"...\"], "
             "\"reason\": \"...\"}.";
    case AgentKind::Selector:
      return "You prune features of a tabular dataset. Pick the least "
             "useful live features to drop. Reply with exactly one JSON "
             "object: {\"drop\": [\"feature name\"], \"reason\": \"...\"}.";
  }
  return {};
}

std::string demo_line(const ActionRecord& r) {
  return "  " + r.tokens + " -> " + fmt(r.score) + "\n";
}

std::string render_user_text(AgentKind role, const AgentContext& ctx,
                             std::size_t n_demos) {
  std::ostringstream out;
  out << "Task: " << ctx.meta.dataset_name << " ("
      << data::task_name(ctx.meta.task) << ", metric " << ctx.meta.metric
      << ")\n";
  out << "Remaining steps: " << ctx.remaining_steps << "\n";
  out << "Operators:";
  for (const auto& op : ctx.operators) out << ' ' << op;
  out << "\n";
  out << "Live features (" << ctx.live.size() << "):\n";
  out << "  name | mean | std | min | max | corr_y\n";
  for (const auto& f : ctx.live) {
    out << "  " << f.name << " | " << fmt(f.stats.mean) << " | "
        << fmt(f.stats.std) << " | " << fmt(f.stats.min) << " | "
        << fmt(f.stats.max) << " | " << fmt(f.target_corr) << "\n";
  }
  if (!ctx.short_term.empty()) {
    out << "Actions so far this iteration:\n";
    for (const auto& r : ctx.short_term)
      out << "  step " << r.step << ": " << decision_name(r.decision)
          << " -> " << fmt(r.score) << "\n";
  }
  if (n_demos > 0) {
    out << "High-scoring feature sets from earlier exploration:\n";
    for (std::size_t i = 0; i < n_demos; ++i) out << demo_line(ctx.demos[i]);
  }
  switch (role) {
    case AgentKind::Router:
      out << "Choose the next action.\n";
      break;
    case AgentKind::Generator:
      out << "Propose new features.\n";
      break;
    case AgentKind::Selector:
      out << "Choose features to drop.\n";
      break;
  }
  return out.str();
}

}  // namespace

llm::PromptBundle build_prompt(AgentKind role, const AgentContext& ctx) {
  llm::PromptBundle bundle;
  bundle.role = role;
  bundle.system_text = role_system_text(role);

  // Demos are evicted oldest-first: by (iteration, step) of the record, not
  // by sampled position.
  std::vector<std::size_t> order(ctx.demos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const auto& ra = ctx.demos[a];
                     const auto& rb = ctx.demos[b];
                     return std::pair(ra.iteration, ra.step) <
                            std::pair(rb.iteration, rb.step);
                   });

  std::size_t keep = ctx.demos.size();
  while (true) {
    // Rebuild with the newest `keep` demos in their original sampled order.
    std::set<std::size_t> evicted(order.begin(),
                                  order.begin() +
                                      static_cast<std::ptrdiff_t>(
                                          ctx.demos.size() - keep));
    AgentContext trimmed = ctx;
    trimmed.demos.clear();
    for (std::size_t i = 0; i < ctx.demos.size(); ++i)
      if (evicted.count(i) == 0) trimmed.demos.push_back(ctx.demos[i]);
    bundle.user_text = render_user_text(role, trimmed, trimmed.demos.size());
    const int tokens = llm::estimate_tokens(bundle.system_text) +
                       llm::estimate_tokens(bundle.user_text);
    if (tokens <= ctx.prompt_token_budget) return bundle;
    if (keep == 0)
      throw Error(ErrorCode::ContextOverflow,
                  "prompt exceeds the context budget (" +
                      std::to_string(tokens) + " > " +
                      std::to_string(ctx.prompt_token_budget) +
                      " tokens) with all demonstrations evicted");
    --keep;
  }
}

// ---- reply parsing ----

namespace {

std::string first_json_block(const std::string& text) {
  const std::size_t start = text.find('{');
  if (start == std::string::npos)
    throw Error(ErrorCode::ParseFailure, "reply contains no JSON object");
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0)
      return text.substr(start, i - start + 1);
  }
  throw Error(ErrorCode::ParseFailure, "reply JSON object is unbalanced");
}

nlohmann::json parse_block(const std::string& text) {
  nlohmann::json j =
      nlohmann::json::parse(first_json_block(text), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::ParseFailure, "reply is not valid JSON");
  return j;
}

}  // namespace

Decision parse_router_reply(const std::string& text) {
  const nlohmann::json j = parse_block(text);
  if (!j.contains("decision") || !j["decision"].is_string())
    throw Error(ErrorCode::ParseFailure, "reply lacks a \"decision\" string");
  const std::string d = j["decision"].get<std::string>();
  if (d == "generation") return Decision::Generate;
  if (d == "selection") return Decision::Select;
  throw Error(ErrorCode::ParseFailure,
              "decision must be \"generation\" or \"selection\", got \"" + d +
                  "\"");
}

std::vector<expr::FeatureExpr> parse_generator_reply(
    const std::string& text, const std::vector<std::string>& schema,
    const expr::ExprLimits& limits) {
  const nlohmann::json j = parse_block(text);
  if (!j.contains("new_features") || !j["new_features"].is_array())
    throw Error(ErrorCode::ParseFailure,
                "reply lacks a \"new_features\" array");
  const auto& arr = j["new_features"];
  if (arr.empty() || arr.size() > 3)
    throw Error(ErrorCode::ParseFailure,
                "\"new_features\" must hold 1 to 3 expressions, got " +
                    std::to_string(arr.size()));
  std::vector<expr::FeatureExpr> out;
  for (const auto& entry : arr) {
    if (!entry.is_string())
      throw Error(ErrorCode::ParseFailure,
                  "\"new_features\" entries must be strings");
    std::vector<expr::FeatureExpr> parsed;
    try {
      parsed = expr::parse_postfix(entry.get<std::string>(), schema, limits);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure,
                  std::string("bad expression in reply: ") + e.what());
    }
    if (parsed.size() != 1)
      throw Error(ErrorCode::ParseFailure,
                  "each \"new_features\" entry must hold exactly one "
                  "expression");
    out.push_back(std::move(parsed.front()));
  }
  return out;
}

std::vector<std::string> parse_selector_reply(const std::string& text) {
  const nlohmann::json j = parse_block(text);
  if (!j.contains("drop") || !j["drop"].is_array())
    throw Error(ErrorCode::ParseFailure, "reply lacks a \"drop\" array");
  std::vector<std::string> out;
  for (const auto& entry : j["drop"]) {
    if (!entry.is_string() || entry.get<std::string>().empty())
      throw Error(ErrorCode::ParseFailure,
                  "\"drop\" entries must be non-empty strings");
    out.push_back(entry.get<std::string>());
  }
  if (out.empty())
    throw Error(ErrorCode::ParseFailure, "\"drop\" must not be empty");
  return out;
}

// ---- routing ----

namespace {

RouteResult uniform_route(Rng& rng) {
  RouteResult r;
  r.decision = rng.uniform() < 0.5 ? Decision::Generate : Decision::Select;
  r.prob = 0.5;
  r.meta.detail = "uniform coin";
  return r;
}

}  // namespace

RouteResult route(const RouterPolicy& policy, const rl::RouterState& state,
                  const AgentContext& ctx, Rng& rng) {
  switch (policy.mode) {
    case RouterMode::Uniform:
      return uniform_route(rng);
    case RouterMode::Ppo: {
      if (policy.net == nullptr)
        throw Error(ErrorCode::ConfigError, "ppo router needs a policy net");
      const auto p = policy.net->probs(state);
      RouteResult r;
      r.decision =
          rng.uniform() < p[0] ? Decision::Generate : Decision::Select;
      r.prob = r.decision == Decision::Generate ? p[0] : p[1];
      r.meta.detail = "policy p(generation)=" + fmt(p[0]);
      return r;
    }
    case RouterMode::Llm: {
      if (policy.transport == nullptr)
        throw Error(ErrorCode::ConfigError, "llm router needs a transport");
      llm::Completion done;
      llm::PromptBundle bundle;
      try {
        bundle = build_prompt(AgentKind::Router, ctx);
        done = llm::complete(policy.llm, *policy.transport, bundle,
                             [](const std::string& t) {
                               try {
                                 parse_router_reply(t);
                                 return true;
                               } catch (const Error&) {
                                 return false;
                               }
                             });
      } catch (const Error& e) {
        RouteResult r = uniform_route(rng);
        r.meta.fallback = true;
        r.meta.detail = std::string("llm router fell back to uniform: ") +
                        e.what();
        return r;
      }
      RouteResult r;
      r.decision = parse_router_reply(done.text);
      // The logging convention for LLM routing: the behavior probability of
      // either decision is recorded as the uniform 0.5, since the model
      // exposes no usable likelihood.
      r.prob = 0.5;
      r.meta.detail = "llm router";
      r.meta.prompt = bundle.system_text + "\n\n" + bundle.user_text;
      r.meta.reply = done.text;
      r.meta.llm_calls = 1;
      r.meta.prompt_tokens = done.prompt_tokens;
      r.meta.reply_tokens = done.reply_tokens;
      return r;
    }
  }
  throw Error(ErrorCode::ConfigError, "unhandled router mode");
}

// ---- generation ----

namespace {

std::size_t weighted_pick(const std::vector<double>& weights, double total,
                          Rng& rng) {
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

// Token sequence of a live feature: base columns are bare references,
// derived columns contribute their whole expression (composition).
std::vector<expr::Token> live_tokens(const AgentContext& ctx,
                                     const std::string& name) {
  const auto& base = ctx.fs->base_names();
  if (std::find(base.begin(), base.end(), name) != base.end())
    return {expr::Token::make_feature(name)};
  for (const auto& e : ctx.fs->derived())
    if (e.name() == name) return e.tokens();
  throw Error(ErrorCode::UnknownFeature, "no live feature named '" + name + "'");
}

GenerateResult heuristic_generate(const AgentContext& ctx, Rng& rng) {
  if (ctx.fs == nullptr || ctx.frame == nullptr || ctx.live.empty())
    throw Error(ErrorCode::ConfigError, "generator context is incomplete");
  const std::size_t n_live = ctx.live.size();

  std::vector<double> weights(n_live);
  double total = 0.0;
  for (std::size_t i = 0; i < n_live; ++i) {
    weights[i] = std::fabs(ctx.live[i].target_corr) + 0.05;
    total += weights[i];
  }

  const auto& frame = *ctx.frame;
  const expr::ColumnLookup lookup = frame.lookup();

  const int roster =
      n_live == 1 ? expr::kUnaryCount
                  : expr::kUnaryCount + expr::kBinaryCount;
  struct Candidate {
    expr::FeatureExpr e;
    double proxy;
  };
  std::vector<Candidate> kept;
  std::set<std::string> seen;

  const int kCandidates = 8;
  for (int c = 0; c < kCandidates; ++c) {
    const int op = static_cast<int>(rng.index(static_cast<std::size_t>(roster)));
    std::vector<expr::Token> tokens;
    if (op < expr::kUnaryCount) {
      tokens = live_tokens(ctx, ctx.live[weighted_pick(weights, total, rng)].name);
      tokens.push_back(
          expr::Token::make_unary(static_cast<expr::UnaryOp>(op)));
    } else {
      const auto a = weighted_pick(weights, total, rng);
      const auto b = weighted_pick(weights, total, rng);
      tokens = live_tokens(ctx, ctx.live[a].name);
      const auto rhs = live_tokens(ctx, ctx.live[b].name);
      tokens.insert(tokens.end(), rhs.begin(), rhs.end());
      tokens.push_back(expr::Token::make_binary(
          static_cast<expr::BinaryOp>(op - expr::kUnaryCount)));
    }

    try {
      expr::FeatureExpr candidate = expr::FeatureExpr::from_tokens(
          std::move(tokens), ctx.fs->limits().expr);
      if (candidate.is_bare_feature()) continue;
      const std::string& key = candidate.canonical_key();
      if (seen.count(key) || ctx.fs->has_live_key(key)) continue;

      std::vector<double> col =
          expr::evaluate(candidate, lookup, frame.n_rows());
      bool finite = true;
      for (double v : col)
        if (!std::isfinite(v)) {
          finite = false;
          break;
        }
      if (!finite) continue;
      if (data::column_stats(col).std < 1e-10) continue;

      const double proxy = std::fabs(data::pearson(col, frame.target()));
      seen.insert(key);
      kept.push_back({std::move(candidate), proxy});
    } catch (const Error&) {
      continue;  // over the depth or token cap
    }
  }

  if (kept.empty())
    throw Error(ErrorCode::NoValidAction,
                "no novel in-cap expression among the sampled candidates");

  std::stable_sort(kept.begin(), kept.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.proxy > b.proxy;
                   });
  const std::size_t take = std::min<std::size_t>(3, kept.size());

  GenerateResult out;
  std::ostringstream detail;
  detail << "heuristic generator kept " << take << " of " << kCandidates
         << " sampled:";
  for (std::size_t i = 0; i < take; ++i) {
    detail << ' ' << expr::render_postfix(kept[i].e) << " (|corr|="
           << fmt(kept[i].proxy) << ")";
    out.action.exprs.push_back(std::move(kept[i].e));
  }
  out.meta.detail = detail.str();
  return out;
}

}  // namespace

GenerateResult generate(const AgentPolicy& policy, const AgentContext& ctx,
                        Rng& rng) {
  if (policy.mode == AgentMode::Heuristic) return heuristic_generate(ctx, rng);
  if (policy.transport == nullptr)
    throw Error(ErrorCode::ConfigError, "llm generator needs a transport");

  const auto& schema = ctx.fs->base_names();
  const auto limits = ctx.fs->limits().expr;
  llm::PromptBundle bundle;
  llm::Completion done;
  try {
    bundle = build_prompt(AgentKind::Generator, ctx);
    done = llm::complete(policy.llm, *policy.transport, bundle,
                         [&](const std::string& t) {
                           try {
                             parse_generator_reply(t, schema, limits);
                             return true;
                           } catch (const Error&) {
                             return false;
                           }
                         });
  } catch (const Error& e) {
    GenerateResult r = heuristic_generate(ctx, rng);
    r.meta.fallback = true;
    r.meta.detail =
        std::string("llm generator fell back to heuristic: ") + e.what();
    return r;
  }
  GenerateResult r;
  r.action.exprs = parse_generator_reply(done.text, schema, limits);
  r.meta.detail =
      "llm generator proposed " + std::to_string(r.action.exprs.size());
  r.meta.prompt = bundle.system_text + "\n\n" + bundle.user_text;
  r.meta.reply = done.text;
  r.meta.llm_calls = 1;
  r.meta.prompt_tokens = done.prompt_tokens;
  r.meta.reply_tokens = done.reply_tokens;
  return r;
}

// ---- selection ----

namespace {

SelectResult heuristic_select(const AgentContext& ctx) {
  if (ctx.fs == nullptr)
    throw Error(ErrorCode::ConfigError, "selector context is incomplete");
  const std::size_t live = ctx.live.size();
  const std::size_t floor = ctx.fs->limits().min_features;
  if (live <= floor)
    throw Error(ErrorCode::NoValidAction,
                "already at the minimum feature floor");

  auto score_of = [&](const FeatureSummary& f) {
    if (!ctx.importance.empty()) {
      auto it = ctx.importance.find(f.name);
      return it == ctx.importance.end() ? 0.0 : it->second;
    }
    return std::fabs(f.target_corr);
  };

  std::vector<std::size_t> order(live);
  for (std::size_t i = 0; i < live; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return score_of(ctx.live[a]) < score_of(ctx.live[b]);
                   });

  std::size_t k = (live + 9) / 10;  // ceil(10% of live)
  k = std::min(k, live - floor);

  SelectResult out;
  std::ostringstream detail;
  detail << "heuristic selector dropping " << k << " lowest-"
         << (ctx.importance.empty() ? "correlation" : "importance")
         << " features:";
  for (std::size_t i = 0; i < k; ++i) {
    detail << ' ' << ctx.live[order[i]].name;
    out.action.drop.push_back(ctx.live[order[i]].name);
  }
  out.meta.detail = detail.str();
  return out;
}

}  // namespace

SelectResult select(const AgentPolicy& policy, const AgentContext& ctx,
                    Rng& rng) {
  (void)rng;
  if (policy.mode == AgentMode::Heuristic) return heuristic_select(ctx);
  if (policy.transport == nullptr)
    throw Error(ErrorCode::ConfigError, "llm selector needs a transport");

  // The floor applies to the LLM path too; asking would waste a call.
  if (ctx.live.size() <= ctx.fs->limits().min_features)
    throw Error(ErrorCode::NoValidAction,
                "already at the minimum feature floor");

  llm::PromptBundle bundle;
  llm::Completion done;
  try {
    bundle = build_prompt(AgentKind::Selector, ctx);
    done = llm::complete(policy.llm, *policy.transport, bundle,
                         [](const std::string& t) {
                           try {
                             parse_selector_reply(t);
                             return true;
                           } catch (const Error&) {
                             return false;
                           }
                         });
  } catch (const Error& e) {
    SelectResult r = heuristic_select(ctx);
    r.meta.fallback = true;
    r.meta.detail =
        std::string("llm selector fell back to heuristic: ") + e.what();
    return r;
  }

  // Keep only names that are actually live; the model may hallucinate.
  std::vector<std::string> asked = parse_selector_reply(done.text);
  std::vector<std::string> usable;
  for (const auto& name : asked) {
    const bool is_live =
        std::any_of(ctx.live.begin(), ctx.live.end(),
                    [&](const FeatureSummary& f) { return f.name == name; });
    if (is_live &&
        std::find(usable.begin(), usable.end(), name) == usable.end())
      usable.push_back(name);
  }
  if (usable.empty()) {
    SelectResult r = heuristic_select(ctx);
    r.meta.fallback = true;
    r.meta.detail = "llm selector fell back to heuristic: no live feature "
                    "among the requested drops";
    r.meta.prompt = bundle.system_text + "\n\n" + bundle.user_text;
    r.meta.reply = done.text;
    r.meta.llm_calls = 1;
    r.meta.prompt_tokens = done.prompt_tokens;
    r.meta.reply_tokens = done.reply_tokens;
    return r;
  }

  SelectResult r;
  r.action.drop = std::move(usable);
  std::ostringstream detail;
  detail << "llm selector dropping " << r.action.drop.size();
  if (r.action.drop.size() != asked.size())
    detail << " (filtered from " << asked.size() << ")";
  r.meta.detail = detail.str();
  r.meta.prompt = bundle.system_text + "\n\n" + bundle.user_text;
  r.meta.reply = done.text;
  r.meta.llm_calls = 1;
  r.meta.prompt_tokens = done.prompt_tokens;
  r.meta.reply_tokens = done.reply_tokens;
  return r;
}

}  // namespace featforge::agents
