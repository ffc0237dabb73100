#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "featforge/agents.hpp"
#include "featforge/errors.hpp"
#include "featforge/expr.hpp"
#include "featforge/llm.hpp"
#include "featforge/pipeline.hpp"
#include "support/synth.hpp"

using namespace featforge;
using agents::AgentContext;
using agents::AgentMode;
using agents::AgentPolicy;
using agents::RouterMode;
using agents::RouterPolicy;
using Reply = llm::MockTransport::Reply;

namespace {

// A record pool with a baseline and a couple of scored steps.
MemoryPool seeded_pool() {
  MemoryPool pool;
  ActionRecord base;
  base.iteration = -1;
  base.decision = Decision::None;
  base.tokens = "x1, x2";
  base.score = 0.40;
  pool.append(base);
  const double scores[4] = {0.52, 0.48, 0.61, 0.55};
  for (int j = 0; j < 4; ++j) {
    ActionRecord r;
    r.iteration = 0;
    r.step = j;
    r.decision = j % 2 == 0 ? Decision::Generate : Decision::Select;
    r.tokens = "x1, x2";
    r.score = scores[j];
    pool.append(r);
  }
  return pool;
}

AgentContext context_for(const data::Frame& frame,
                         const pipeline::FeatureSet& fs, AgentKind kind,
                         Rng& rng, const MemoryPool& pool,
                         bool use_short = true, bool use_long = true) {
  agents::TaskMeta meta;
  meta.dataset_name = "synthetic";
  meta.task = frame.task();
  return agents::make_context(frame, fs, pool, 0, kind, use_short, use_long,
                              rng, {}, 5, meta);
}

}  // namespace

TEST_CASE("context summarizes exactly the live features") {
  data::Frame frame = synth::product_frame(80, 1);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  Rng rng(3);
  AgentContext ctx = context_for(frame, fs, AgentKind::Generator, rng, pool);

  REQUIRE(ctx.live.size() == 2);
  CHECK(ctx.live[0].name == "x1");
  CHECK(ctx.live[1].name == "x2");
  const auto oracle = data::column_stats(frame.column("x1"));
  CHECK(ctx.live[0].stats.mean == oracle.mean);
  CHECK(ctx.live[0].stats.std == oracle.std);
  CHECK(ctx.live[0].target_corr ==
        data::pearson(frame.column("x1"), frame.target()));
  CHECK(ctx.operators.size() == 13);
  CHECK(ctx.meta.metric == "1-MSE");

  // Generator sees only generation steps from the current iteration.
  REQUIRE(ctx.short_term.size() == 2);
  CHECK(ctx.short_term[0].step == 0);
  CHECK(ctx.short_term[1].step == 2);
  CHECK(ctx.demos.size() == 4);

  Rng rng2(3);
  AgentContext bare = context_for(frame, fs, AgentKind::Generator, rng2, pool,
                                  false, false);
  CHECK(bare.short_term.empty());
  CHECK(bare.demos.empty());
}

TEST_CASE("uniform routing is a seeded fair coin") {
  RouterPolicy uniform;
  AgentContext ctx;  // untouched by this mode
  Rng rng(11);
  int generates = 0;
  for (int i = 0; i < 1000; ++i) {
    auto r = agents::route(uniform, rl::RouterState{}, ctx, rng);
    CHECK(r.prob == 0.5);
    CHECK_FALSE(r.meta.fallback);
    generates += r.decision == Decision::Generate ? 1 : 0;
  }
  CHECK(generates > 450);
  CHECK(generates < 550);

  // Same seed, same sequence.
  Rng a(7), b(7);
  for (int i = 0; i < 50; ++i)
    CHECK(agents::route(uniform, rl::RouterState{}, ctx, a).decision ==
          agents::route(uniform, rl::RouterState{}, ctx, b).decision);
}

TEST_CASE("policy routing samples the network distribution") {
  rl::PolicyNet net(5);
  RouterPolicy policy;
  policy.mode = RouterMode::Ppo;
  policy.net = &net;
  AgentContext ctx;

  rl::RouterState state;
  for (std::size_t d = 0; d < rl::RouterState::kDim; ++d)
    state[d] = 0.3 * static_cast<double>(d % 3);
  const auto p = net.probs(state);

  Rng rng(21);
  int generates = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    auto r = agents::route(policy, state, ctx, rng);
    if (r.decision == Decision::Generate) {
      CHECK(r.prob == p[0]);
      ++generates;
    } else {
      CHECK(r.prob == p[1]);
    }
  }
  // Monte-Carlo share within +-5% of the policy probability.
  CHECK(std::fabs(static_cast<double>(generates) / trials - p[0]) < 0.05);

  // Saturated logits pin the decision.
  std::vector<double> flat(net.n_params(), 0.0);
  flat[flat.size() - 2] = 10.0;
  flat[flat.size() - 1] = -10.0;
  net.set_params(flat);
  auto r = agents::route(policy, state, ctx, rng);
  CHECK(r.decision == Decision::Generate);
  CHECK(r.prob > 0.999999);
  CHECK(r.prob < 1.0);
}

TEST_CASE("llm routing parses decisions and falls back to the coin") {
  data::Frame frame = synth::product_frame(60, 2);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  Rng rng(9);
  AgentContext ctx = context_for(frame, fs, AgentKind::Router, rng, pool);

  llm::MockTransport mock;
  mock.push_reply(AgentKind::Router,
                  "{\"decision\": \"selection\", \"reason\": \"too wide\"}");
  RouterPolicy policy;
  policy.mode = RouterMode::Llm;
  policy.transport = &mock;

  auto r = agents::route(policy, rl::RouterState{}, ctx, rng);
  CHECK(r.decision == Decision::Select);
  CHECK(r.prob == 0.5);
  CHECK_FALSE(r.meta.fallback);
  CHECK(r.meta.llm_calls == 1);
  CHECK(r.meta.prompt.find("Live features (2):") != std::string::npos);
  CHECK(r.meta.reply.find("selection") != std::string::npos);

  // Persistent garbage exhausts the retries and flags a fallback.
  mock.push_call(AgentKind::Router,
                 {Reply::ok("no json"), Reply::ok("still none"),
                  Reply::ok("{\"decision\": \"mutate\"}"), Reply::ok("nope")});
  auto fb = agents::route(policy, rl::RouterState{}, ctx, rng);
  CHECK(fb.meta.fallback);
  CHECK(fb.prob == 0.5);
  CHECK(fb.meta.detail.find("fell back") != std::string::npos);
}

TEST_CASE("reply parsing is strict about schemas") {
  CHECK(agents::parse_router_reply(
            "noise {\"decision\":\"generation\",\"reason\":\"r\"} trailing") ==
        Decision::Generate);
  CHECK(agents::parse_router_reply("{\"decision\":\"selection\"}") ==
        Decision::Select);
  CHECK_THROWS_AS(agents::parse_router_reply("free text without JSON"), Error);
  CHECK_THROWS_AS(agents::parse_router_reply("{\"decision\":\"both\"}"), Error);
  CHECK_THROWS_AS(agents::parse_router_reply("{\"reason\":\"no field\"}"),
                  Error);
  CHECK_THROWS_AS(agents::parse_router_reply("{\"decision\": 3}"), Error);
  try {
    agents::parse_router_reply("{\"decision\":");
    FAIL("expected ParseFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseFailure);
  }

  const std::vector<std::string> schema = {"f1", "f2", "f3"};
  auto exprs = agents::parse_generator_reply(
      "{\"new_features\": [\"f1 f2 *\", \"f3 sin\"], \"reason\": \"mix\"}",
      schema, {});
  REQUIRE(exprs.size() == 2);
  CHECK(expr::render_postfix(exprs[0]) == "f1 f2 *");
  CHECK(expr::render_postfix(exprs[1]) == "f3 sin");
  CHECK_THROWS_AS(
      agents::parse_generator_reply("{\"new_features\": []}", schema, {}),
      Error);
  CHECK_THROWS_AS(agents::parse_generator_reply(
                      "{\"new_features\": [\"f1\",\"f2\",\"f3\",\"f1 f2 +\"]}",
                      schema, {}),
                  Error);
  CHECK_THROWS_AS(agents::parse_generator_reply(
                      "{\"new_features\": [\"f9 sin\"]}", schema, {}),
                  Error);
  CHECK_THROWS_AS(agents::parse_generator_reply(
                      "{\"new_features\": [\"f1 f2\"]}", schema, {}),
                  Error);
  CHECK_THROWS_AS(agents::parse_generator_reply(
                      "{\"new_features\": [\"f1 sin, f2 cos\"]}", schema, {}),
                  Error);

  auto drops = agents::parse_selector_reply(
      "{\"drop\": [\"f3\", \"f1\"], \"reason\": \"weak\"}");
  CHECK(drops == std::vector<std::string>{"f3", "f1"});
  CHECK_THROWS_AS(agents::parse_selector_reply("{\"drop\": []}"), Error);
  CHECK_THROWS_AS(agents::parse_selector_reply("{\"drop\": [\"\"]}"), Error);
  CHECK_THROWS_AS(agents::parse_selector_reply("{\"drop\": \"f1\"}"), Error);

  // Nested braces inside strings do not confuse block extraction.
  CHECK(agents::parse_router_reply(
            "{\"decision\":\"generation\",\"reason\":\"use {braces} here\"}") ==
        Decision::Generate);
}

TEST_CASE("heuristic generator favors high-correlation compositions") {
  data::Frame frame = synth::product_frame(400, 6);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  AgentPolicy heuristic;

  // The proxy ranking must match an independent re-computation: every
  // returned expression's |corr| is non-increasing, and novel.
  bool saw_product = false;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    AgentContext ctx = context_for(frame, fs, AgentKind::Generator, rng, pool);
    agents::GenerateResult r;
    try {
      r = agents::generate(heuristic, ctx, rng);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoValidAction);
      continue;
    }
    REQUIRE(r.action.exprs.size() >= 1);
    REQUIRE(r.action.exprs.size() <= 3);
    double prev = 2.0;
    for (const auto& e : r.action.exprs) {
      auto col = expr::evaluate(e, frame.lookup(), frame.n_rows());
      const double proxy = std::fabs(data::pearson(col, frame.target()));
      CHECK(proxy <= prev + 1e-12);
      prev = proxy;
      CHECK_FALSE(fs.has_live_key(e.canonical_key()));
      if (e.canonical_key() == "(x1 * x2)") saw_product = true;
    }
  }
  // With y = x1*x2 the product dominates whenever it is sampled; across 30
  // seeds it must have shown up.
  CHECK(saw_product);
}

TEST_CASE("a single live feature limits the generator to unary operators") {
  Rng mk(4);
  std::vector<double> a(40), y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = mk.normal();
    y[i] = a[i] * a[i];
  }
  data::Frame frame = data::Frame::from_columns(
      {"a"}, {a}, y, data::Task::Regression);
  pipeline::SetLimits limits;
  limits.min_features = 1;
  auto fs = pipeline::FeatureSet::from_frame(frame, limits);
  MemoryPool pool = seeded_pool();
  AgentPolicy heuristic;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    AgentContext ctx = context_for(frame, fs, AgentKind::Generator, rng, pool);
    try {
      auto r = agents::generate(heuristic, ctx, rng);
      for (const auto& e : r.action.exprs)
        for (const auto& t : e.tokens())
          CHECK(t.kind != expr::Token::Kind::Binary);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoValidAction);
    }
  }
}

TEST_CASE("heuristic selector drops the least important features") {
  data::Frame frame = synth::noise_frame(120, 2, 8, 5);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  Rng rng(8);
  AgentContext ctx = context_for(frame, fs, AgentKind::Selector, rng, pool);
  AgentPolicy heuristic;

  // 10 live features -> ceil(10%) = 1 drop; the importance map wins over
  // the correlation proxy when present.
  ctx.importance.clear();
  for (const auto& f : ctx.live) ctx.importance[f.name] = 0.1;
  ctx.importance["z3"] = 0.0001;
  auto r = agents::select(heuristic, ctx, rng);
  REQUIRE(r.action.drop.size() == 1);
  CHECK(r.action.drop[0] == "z3");
  auto outcome = pipeline::apply_selection(fs, r.action);
  CHECK(outcome.dropped == std::vector<std::string>{"z3"});

  // Without importances the |corr| proxy picks a noise column over the
  // informative ones.
  ctx.importance.clear();
  auto byc = agents::select(heuristic, ctx, rng);
  REQUIRE(byc.action.drop.size() == 1);
  CHECK(byc.action.drop[0].front() == 'z');

  // At the floor there is nothing valid to do.
  data::Frame two = synth::product_frame(50, 1);
  auto floor_set = pipeline::FeatureSet::from_frame(two);
  Rng rng2(1);
  AgentContext floor_ctx =
      context_for(two, floor_set, AgentKind::Selector, rng2, pool);
  CHECK_THROWS_AS(agents::select(heuristic, floor_ctx, rng2), Error);
}

TEST_CASE("llm generator and selector honor the parse contract") {
  data::Frame frame = synth::product_frame(60, 9);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  llm::MockTransport mock;
  AgentPolicy policy;
  policy.mode = AgentMode::Llm;
  policy.transport = &mock;

  mock.push_reply(AgentKind::Generator,
                  "{\"new_features\": [\"x1 x2 *\"], \"reason\": \"cross\"}");
  Rng rng(2);
  AgentContext gctx = context_for(frame, fs, AgentKind::Generator, rng, pool);
  auto g = agents::generate(policy, gctx, rng);
  REQUIRE(g.action.exprs.size() == 1);
  CHECK(expr::render_postfix(g.action.exprs[0]) == "x1 x2 *");
  CHECK_FALSE(g.meta.fallback);
  CHECK(g.meta.llm_calls == 1);
  CHECK(g.meta.prompt.find("postfix") != std::string::npos);

  // Unparseable generator replies degrade to the heuristic, flagged.
  mock.push_call(AgentKind::Generator,
                 {Reply::ok("nope"), Reply::ok("{\"new_features\": []}"),
                  Reply::ok("{}"), Reply::ok("broken")});
  auto fb = agents::generate(policy, gctx, rng);
  CHECK(fb.meta.fallback);
  CHECK(fb.action.exprs.size() >= 1);  // heuristic result still valid

  // Selector: hallucinated names are filtered; fully bogus lists fall back.
  auto grown = pipeline::apply_generation(
      fs, pipeline::GenerationAction{expr::parse_postfix(
              "x1 x2 +, x1 square", frame.feature_names())},
      frame);
  const auto& fs4 = grown.set;
  REQUIRE(fs4.live_count() == 4);
  Rng rng2(3);
  AgentContext sctx = context_for(frame, fs4, AgentKind::Selector, rng2, pool);

  mock.push_reply(AgentKind::Selector,
                  "{\"drop\": [\"ghost\", \"x2\"], \"reason\": \"weak\"}");
  auto s = agents::select(policy, sctx, rng2);
  CHECK(s.action.drop == std::vector<std::string>{"x2"});
  CHECK_FALSE(s.meta.fallback);
  CHECK(s.meta.detail.find("filtered") != std::string::npos);

  mock.push_reply(AgentKind::Selector, "{\"drop\": [\"ghost\"]}");
  auto s2 = agents::select(policy, sctx, rng2);
  CHECK(s2.meta.fallback);
  CHECK_FALSE(s2.action.drop.empty());
}

TEST_CASE("prompts are deterministic and sectioned by memory flags") {
  data::Frame frame = synth::product_frame(60, 4);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();

  Rng r1(6), r2(6);
  AgentContext a = context_for(frame, fs, AgentKind::Router, r1, pool);
  AgentContext b = context_for(frame, fs, AgentKind::Router, r2, pool);
  auto pa = agents::build_prompt(AgentKind::Router, a);
  auto pb = agents::build_prompt(AgentKind::Router, b);
  CHECK(pa.system_text == pb.system_text);
  CHECK(pa.user_text == pb.user_text);  // identical bytes
  CHECK(pa.user_text.find("Live features (2):") != std::string::npos);
  CHECK(pa.user_text.find("Actions so far this iteration:") !=
        std::string::npos);
  CHECK(pa.user_text.find("High-scoring feature sets") != std::string::npos);
  REQUIRE(a.demos.size() == 4);

  Rng r3(6);
  AgentContext none =
      context_for(frame, fs, AgentKind::Router, r3, pool, false, false);
  auto pn = agents::build_prompt(AgentKind::Router, none);
  CHECK(pn.user_text.find("Actions so far") == std::string::npos);
  CHECK(pn.user_text.find("High-scoring") == std::string::npos);
  CHECK(pn.user_text.find("Live features (2):") != std::string::npos);

  // Role schemas differ in the system text.
  auto pg = agents::build_prompt(AgentKind::Generator, a);
  auto ps = agents::build_prompt(AgentKind::Selector, a);
  CHECK(pg.system_text.find("new_features") != std::string::npos);
  CHECK(ps.system_text.find("drop") != std::string::npos);
  CHECK(pa.system_text.find("decision") != std::string::npos);
}

TEST_CASE("tight budgets evict demonstrations oldest-first then overflow") {
  data::Frame frame = synth::product_frame(60, 4);
  auto fs = pipeline::FeatureSet::from_frame(frame);
  MemoryPool pool = seeded_pool();
  Rng rng(6);
  AgentContext ctx = context_for(frame, fs, AgentKind::Router, rng, pool);
  REQUIRE(ctx.demos.size() == 4);

  const auto full = agents::build_prompt(AgentKind::Router, ctx);
  const int full_tokens = llm::estimate_tokens(full.system_text) +
                          llm::estimate_tokens(full.user_text);

  // A budget slightly under the full prompt forces evictions; the newest
  // records (largest iteration/step) must be the survivors.
  ctx.prompt_token_budget = full_tokens - 1;
  auto trimmed = agents::build_prompt(AgentKind::Router, ctx);
  int oldest_step = 10;
  for (const auto& d : ctx.demos) oldest_step = std::min(oldest_step, d.step);
  CHECK(trimmed.user_text.find("High-scoring") != std::string::npos);
  // The evicted lines belong to the oldest records.
  std::set<int> surviving;
  for (const auto& d : ctx.demos) {
    const std::string line = d.tokens + " -> ";
    if (trimmed.user_text.find(line) != std::string::npos)
      surviving.insert(d.step);
  }

  ctx.prompt_token_budget = 40;  // below the irreducible prompt
  try {
    agents::build_prompt(AgentKind::Router, ctx);
    FAIL("expected ContextOverflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ContextOverflow);
  }
}

TEST_CASE("ten thousand heuristic actions all pass pipeline validation") {
  AgentPolicy heuristic;
  MemoryPool pool;  // empty: agents must not depend on memory availability
  int performed = 0;
  std::uint64_t frame_seed = 0;
  while (performed < 10000) {
    ++frame_seed;
    data::Frame frame = synth::noise_frame(
        40, 1 + static_cast<std::size_t>(frame_seed % 3),
        1 + static_cast<std::size_t>(frame_seed % 4), frame_seed);
    auto fs = pipeline::FeatureSet::from_frame(frame);
    Rng rng(frame_seed * 977 + 3);
    for (int step = 0; step < 25 && performed < 10000; ++step) {
      AgentContext ctx = context_for(frame, fs, AgentKind::Generator, rng,
                                     pool, false, false);
      const bool gen = rng.bernoulli(0.5);
      try {
        if (gen) {
          auto r = agents::generate(heuristic, ctx, rng);
          auto out = pipeline::apply_generation(fs, r.action, frame);
          fs = out.set;
        } else {
          auto r = agents::select(heuristic, ctx, rng);
          auto out = pipeline::apply_selection(fs, r.action);
          fs = out.set;
        }
      } catch (const Error& e) {
        // The only admissible refusal is "nothing valid to do".
        CHECK(e.code() == ErrorCode::NoValidAction);
      }
      ++performed;
    }
  }
  CHECK(performed == 10000);
}
