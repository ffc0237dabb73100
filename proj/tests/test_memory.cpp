#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "featforge/errors.hpp"
#include "featforge/memory.hpp"
#include "featforge/rng.hpp"
#include "support/tmpdir.hpp"

using namespace featforge;

namespace {

ActionRecord make_record(int iteration, int step, Decision d, double score) {
  ActionRecord r;
  r.iteration = iteration;
  r.step = step;
  r.decision = d;
  r.agent_detail = "test";
  r.tokens = "f1, f2";
  r.score = score;
  for (std::size_t i = 0; i < rl::RouterState::kDim; ++i)
    r.state[i] = 0.01 * static_cast<double>(i) + score;
  r.behavior_prob = 0.5;
  return r;
}

MemoryPool random_pool(std::uint64_t seed, int n, int top_pool = 20,
                       int demos = 4) {
  Rng rng(seed);
  MemoryPool pool(top_pool, demos);
  for (int i = 0; i < n; ++i) {
    Decision d = rng.bernoulli(0.5) ? Decision::Generate : Decision::Select;
    pool.append(make_record(i / 6, i % 6, d, rng.uniform()));
  }
  return pool;
}

}  // namespace

TEST_CASE("decision names round-trip") {
  for (Decision d :
       {Decision::Generate, Decision::Select, Decision::None}) {
    CHECK(decision_from_name(decision_name(d)) == d);
  }
  CHECK(std::string(decision_name(Decision::Generate)) == "generation");
  CHECK(std::string(decision_name(Decision::Select)) == "selection");
  CHECK(std::string(decision_name(Decision::None)) == "baseline");
  CHECK_THROWS_AS(decision_from_name("mutate"), Error);
}

TEST_CASE("append rejects duplicate (iteration, step) keys") {
  MemoryPool pool;
  pool.append(make_record(-1, 0, Decision::None, 0.1));
  pool.append(make_record(0, 0, Decision::Generate, 0.2));
  pool.append(make_record(0, 1, Decision::Select, 0.3));
  CHECK(pool.size() == 3);

  CHECK_THROWS_WITH_AS(pool.append(make_record(0, 1, Decision::Generate, 0.9)),
                       doctest::Contains("(0, 1)"), Error);
  try {
    pool.append(make_record(0, 0, Decision::Select, 0.9));
    FAIL("expected DuplicateKey");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateKey);
  }
  CHECK(pool.size() == 3);
}

TEST_CASE("short-term recall filters by iteration and agent") {
  MemoryPool pool;
  pool.append(make_record(-1, 0, Decision::None, 0.1));
  pool.append(make_record(0, 0, Decision::Generate, 0.2));
  pool.append(make_record(0, 1, Decision::Select, 0.3));
  pool.append(make_record(0, 2, Decision::Generate, 0.4));
  pool.append(make_record(1, 0, Decision::Select, 0.5));

  auto router_view = pool.short_term(0, AgentKind::Router);
  REQUIRE(router_view.size() == 3);
  CHECK(router_view[0].step == 0);
  CHECK(router_view[1].step == 1);
  CHECK(router_view[2].step == 2);

  auto gen_view = pool.short_term(0, AgentKind::Generator);
  REQUIRE(gen_view.size() == 2);
  CHECK(gen_view[0].step == 0);
  CHECK(gen_view[1].step == 2);

  auto sel_view = pool.short_term(0, AgentKind::Selector);
  REQUIRE(sel_view.size() == 1);
  CHECK(sel_view[0].step == 1);

  // A fresh iteration starts with an empty short-term view.
  CHECK(pool.short_term(2, AgentKind::Router).empty());
  CHECK(pool.short_term(-1, AgentKind::Router).size() == 1);
}

TEST_CASE("top pool matches a sort-by-score oracle") {
  for (std::uint64_t seed : {11u, 22u, 33u, 44u}) {
    MemoryPool pool = random_pool(seed, 57);
    std::vector<std::size_t> top = pool.top_indices();
    REQUIRE(top.size() == 20);

    // Oracle: the 20 largest scores, computed by sorting a copy.
    std::vector<double> scores;
    for (const auto& r : pool.records()) scores.push_back(r.score);
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cutoff = sorted[19];

    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < top.size(); ++i) {
      CHECK(pool.records()[top[i]].score >= cutoff);
      seen.insert(top[i]);
      if (i > 0)
        CHECK(pool.records()[top[i - 1]].score >= pool.records()[top[i]].score);
    }
    CHECK(seen.size() == top.size());
  }
}

TEST_CASE("top pool keeps ties in append order and shrinks to fit") {
  MemoryPool pool(3, 2);
  pool.append(make_record(0, 0, Decision::Generate, 0.5));
  pool.append(make_record(0, 1, Decision::Generate, 0.9));
  pool.append(make_record(0, 2, Decision::Generate, 0.5));
  pool.append(make_record(0, 3, Decision::Generate, 0.1));
  std::vector<std::size_t> top = pool.top_indices();
  REQUIRE(top.size() == 3);
  CHECK(top[0] == 1);
  CHECK(top[1] == 0);  // 0.5 tie: record 0 appended before record 2
  CHECK(top[2] == 2);

  MemoryPool small(20, 4);
  small.append(make_record(0, 0, Decision::Generate, 0.5));
  CHECK(small.top_indices().size() == 1);
  Rng rng(1);
  CHECK(small.long_term_sample(rng).size() == 1);
}

TEST_CASE("long-term sampling is uniform over the top pool") {
  // 25 records with distinct scores; exactly 20 qualify for the pool.
  MemoryPool pool;
  for (int i = 0; i < 25; ++i)
    pool.append(make_record(0, i, Decision::Generate, 0.01 * i));
  std::set<int> top_steps;
  for (std::size_t idx : pool.top_indices())
    top_steps.insert(pool.records()[idx].step);
  REQUIRE(top_steps.size() == 20);
  CHECK(top_steps.count(4) == 0);  // scores 0.00 .. 0.04 miss the cut
  CHECK(top_steps.count(5) == 1);

  Rng rng(99);
  std::map<int, int> freq;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    auto demos = pool.long_term_sample(rng);
    REQUIRE(demos.size() == 4);
    std::set<int> distinct;
    for (const auto& r : demos) {
      CHECK(top_steps.count(r.step) == 1);
      distinct.insert(r.step);
      freq[r.step]++;
    }
    CHECK(distinct.size() == 4);  // sampling without replacement
  }

  // Each member is expected in draws * K / T = 2000 samples; allow +-20%.
  const double expected = draws * 4.0 / 20.0;
  for (int step : top_steps) {
    CHECK(freq[step] > expected * 0.8);
    CHECK(freq[step] < expected * 1.2);
  }
}

TEST_CASE("preloaded records serve demonstrations but stay out of the trace") {
  testing_support::TmpDir tmp("memory_preload");
  MemoryPool pool;
  for (int i = 0; i < 3; ++i)
    pool.append(make_record(0, i, Decision::Generate, 0.1 * i));

  // Keys overlapping this run's records are fine on the preload side.
  std::vector<ActionRecord> prior;
  for (int i = 0; i < 30; ++i) {
    ActionRecord r = make_record(0, i, Decision::Select, 10.0 + i);
    r.tokens = "prior" + std::to_string(i);
    prior.push_back(r);
  }
  pool.preload(prior);
  CHECK(pool.size() == 3);
  CHECK(pool.preloaded().size() == 30);

  // The top pool spans both stores, so every demo comes from the prior run.
  Rng rng(5);
  for (int d = 0; d < 50; ++d) {
    for (const auto& demo : pool.long_term_sample(rng))
      CHECK(demo.tokens.rfind("prior", 0) == 0);
  }

  // Short-term views, best, and persistence see only this run's records.
  CHECK(pool.short_term(0, AgentKind::Selector).empty());
  CHECK(pool.best().score == doctest::Approx(0.2));
  const auto path = tmp.file("trace.jsonl").string();
  pool.save_jsonl(path);
  CHECK(MemoryPool::load_jsonl(path).size() == 3);

  // A pool that holds nothing but preloads can still serve demos.
  MemoryPool fresh;
  fresh.preload(prior);
  CHECK(fresh.long_term_sample(rng).size() == 4);
  CHECK_THROWS_AS(fresh.best(), Error);
}

TEST_CASE("best record matches a linear-scan oracle and prefers earliest") {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    MemoryPool pool = random_pool(seed, 41);
    const ActionRecord& b = pool.best();

    double max_score = pool.records()[0].score;
    for (const auto& r : pool.records())
      max_score = std::max(max_score, r.score);
    std::size_t first = 0;
    while (pool.records()[first].score != max_score) ++first;
    CHECK(b.iteration == pool.records()[first].iteration);
    CHECK(b.step == pool.records()[first].step);
    CHECK(b.score == max_score);
  }

  MemoryPool tie;
  tie.append(make_record(0, 0, Decision::Generate, 0.7));
  tie.append(make_record(0, 1, Decision::Generate, 0.9));
  tie.append(make_record(0, 2, Decision::Generate, 0.9));
  CHECK(tie.best().step == 1);
}

TEST_CASE("empty pool operations throw") {
  MemoryPool pool;
  Rng rng(1);
  CHECK_THROWS_AS(pool.best(), Error);
  CHECK_THROWS_AS(pool.long_term_sample(rng), Error);
  CHECK_THROWS_AS(MemoryPool(0, 4), Error);
  CHECK_THROWS_AS(MemoryPool(20, 0), Error);
}

TEST_CASE("records survive a JSONL round-trip byte for byte") {
  testing_support::TmpDir dir("memory");
  MemoryPool pool = random_pool(5, 23);
  {
    ActionRecord r = make_record(9, 0, Decision::Generate, 0.42);
    r.fallback = true;
    r.no_op = true;
    r.prompt = "prompt with \"quotes\"\nand newline";
    r.reply = "{\"decision\":\"generation\"}";
    pool.append(r);
  }
  std::string path = dir.file("pool.jsonl");
  pool.save_jsonl(path);

  MemoryPool back = MemoryPool::load_jsonl(path);
  REQUIRE(back.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const ActionRecord& a = pool.records()[i];
    const ActionRecord& b = back.records()[i];
    CHECK(a.iteration == b.iteration);
    CHECK(a.step == b.step);
    CHECK(a.decision == b.decision);
    CHECK(a.agent_detail == b.agent_detail);
    CHECK(a.tokens == b.tokens);
    CHECK(a.score == b.score);  // exact: JSON uses shortest round-trip floats
    CHECK(a.state.v == b.state.v);
    CHECK(a.behavior_prob == b.behavior_prob);
    CHECK(a.fallback == b.fallback);
    CHECK(a.no_op == b.no_op);
    CHECK(a.prompt == b.prompt);
    CHECK(a.reply == b.reply);
  }

  // Saving again from the loaded pool reproduces the same bytes.
  std::string path2 = dir.file("pool2.jsonl");
  back.save_jsonl(path2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("loading bad files reports usable errors") {
  testing_support::TmpDir dir("memory_bad");
  CHECK_THROWS_AS(MemoryPool::load_jsonl(dir.file("absent.jsonl")), Error);

  std::string garbled = dir.file("garbled.jsonl");
  dir.write("garbled.jsonl",
            make_record(0, 0, Decision::Generate, 0.5).to_json().dump() +
                "\nnot json at all\n");
  try {
    MemoryPool::load_jsonl(garbled);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  // Duplicate keys are caught on load as well.
  std::string dup = dir.file("dup.jsonl");
  std::string line = make_record(0, 0, Decision::Generate, 0.5).to_json().dump();
  dir.write("dup.jsonl", line + "\n" + line + "\n");
  CHECK_THROWS_AS(MemoryPool::load_jsonl(dup), Error);
}
