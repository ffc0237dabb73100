#include "featforge/search.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "featforge/errors.hpp"
#include "featforge/rng.hpp"

namespace featforge::search {

namespace {

constexpr std::uint64_t kSearchStream = 0x5EA2C4;

void check_config(const SearchConfig& cfg) {
  if (cfg.iterations < 1 || cfg.steps < 1)
    throw Error(ErrorCode::ConfigError, "iterations and steps must be >= 1");
  if (cfg.router == agents::RouterMode::Ppo && cfg.policy == nullptr)
    throw Error(ErrorCode::ConfigError, "ppo routing needs a policy net");
  const bool wants_llm = cfg.router == agents::RouterMode::Llm ||
                         cfg.agents == agents::AgentMode::Llm;
  if (wants_llm && cfg.transport == nullptr)
    throw Error(ErrorCode::ConfigError, "llm mode needs a transport");
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void stats_add(RunStats& stats, const agents::ActionMeta& meta) {
  stats.llm_calls += static_cast<std::size_t>(meta.llm_calls);
}

}  // namespace

nlohmann::json SearchResult::to_json() const {
  nlohmann::json provenance = nlohmann::json::object();
  int kept = 0, dropped = 0;
  const auto& base = best.base_names();
  for (std::size_t i = 0; i < base.size(); ++i)
    (best.mask()[i] ? kept : dropped) += 1;
  nlohmann::json generated = nlohmann::json::array();
  for (std::size_t i = 0; i < best.derived().size(); ++i)
    if (best.mask()[base.size() + i])
      generated.push_back(expr::render_infix(best.derived()[i]));
  provenance["kept_originals"] = kept;
  provenance["dropped_originals"] = dropped;
  provenance["generated"] = generated;

  return nlohmann::json{
      {"baseline_score", baseline_report.primary},
      {"best_score", best_report.primary},
      {"gain", best_report.primary - baseline_report.primary},
      {"best_secondary", best_report.secondary},
      {"model", std::string(eval::model_name(best_report.model))},
      {"best_features", best.live_names()},
      {"best_tokens", best.token_sequence()},
      {"provenance", provenance},
      {"records", pool.size()},
      {"stats",
       {{"evaluations", stats.evaluations},
        {"cache_hits", stats.cache_hits},
        {"llm_calls", stats.llm_calls},
        {"llm_fallbacks", stats.llm_fallbacks},
        {"no_ops", stats.no_ops},
        {"wall_seconds", stats.wall_seconds}}}};
}

SearchResult run(const data::Frame& frame, const SearchConfig& config) {
  check_config(config);
  const auto t0 = std::chrono::steady_clock::now();

  eval::Evaluator evaluator(frame, config.model, config.folds, config.seed);
  Rng rng(seed_mix(config.seed, kSearchStream));

  agents::TaskMeta meta = config.meta;
  meta.task = frame.task();

  agents::RouterPolicy router;
  router.mode = config.router;
  router.net = config.policy;
  router.transport = config.transport;
  router.llm = config.llm;
  agents::AgentPolicy agent;
  agent.mode = config.agents;
  agent.transport = config.transport;
  agent.llm = config.llm;

  const pipeline::FeatureSet raw =
      pipeline::FeatureSet::from_frame(frame, config.limits);
  const eval::ScoreReport baseline = evaluator.score(raw);

  SearchResult result;
  result.pool = MemoryPool(config.top_pool, config.demos);
  if (!config.preload.empty()) result.pool.preload(config.preload);
  result.baseline_report = baseline;
  result.best = raw;
  result.best_report = baseline;

  ActionRecord base_record;
  base_record.iteration = -1;
  base_record.step = 0;
  base_record.decision = Decision::None;
  base_record.agent_detail = "baseline evaluation of the raw features";
  base_record.tokens = raw.token_sequence();
  base_record.score = baseline.primary;
  base_record.state = rl::featurize(raw, frame, rl::SearchProgress{});
  result.pool.append(base_record);

  auto make_ctx = [&](const pipeline::FeatureSet& fs, int iteration,
                      AgentKind kind, const eval::ScoreReport& current,
                      int remaining) {
    agents::AgentContext ctx = agents::make_context(
        frame, fs, result.pool, iteration, kind, config.use_short_memory,
        config.use_long_memory, rng, current.importance, remaining, meta);
    ctx.prompt_token_budget = config.prompt_token_budget;
    return ctx;
  };

  for (int i = 0; i < config.iterations; ++i) {
    pipeline::FeatureSet fs = raw;  // restart from the raw set
    eval::ScoreReport current = baseline;
    double prev_score = baseline.primary;
    Decision last = Decision::None;

    for (int j = 0; j < config.steps; ++j) {
      rl::SearchProgress progress;
      progress.iteration = i;
      progress.n_iterations = config.iterations;
      progress.step = j;
      progress.n_steps = config.steps;
      progress.current_score = current.primary;
      progress.best_score = result.best_report.primary;
      progress.prev_score = prev_score;
      progress.last_decision = last;
      const rl::RouterState state = rl::featurize(fs, frame, progress);

      agents::RouteResult routed;
      if (config.router == agents::RouterMode::Llm) {
        const auto rctx =
            make_ctx(fs, i, AgentKind::Router, current, config.steps - j);
        routed = agents::route(router, state, rctx, rng);
      } else {
        routed = agents::route(router, state, agents::AgentContext{}, rng);
      }

      ActionRecord rec;
      rec.iteration = i;
      rec.step = j;
      rec.decision = routed.decision;
      rec.state = state;
      rec.behavior_prob = routed.prob;
      rec.fallback = routed.meta.fallback;
      rec.prompt = routed.meta.prompt;
      rec.reply = routed.meta.reply;
      stats_add(result.stats, routed.meta);

      agents::ActionMeta acted;
      bool no_op = false;
      try {
        if (routed.decision == Decision::Generate) {
          auto ctx = make_ctx(fs, i, AgentKind::Generator, current,
                              config.steps - j);
          auto g = agents::generate(agent, ctx, rng);
          acted = g.meta;
          auto outcome = pipeline::apply_generation(fs, g.action, frame);
          no_op = outcome.is_noop();
          fs = std::move(outcome.set);
        } else {
          auto ctx = make_ctx(fs, i, AgentKind::Selector, current,
                              config.steps - j);
          auto s = agents::select(agent, ctx, rng);
          acted = s.meta;
          auto outcome = pipeline::apply_selection(fs, s.action);
          no_op = outcome.is_noop();
          fs = std::move(outcome.set);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoValidAction) throw;
        no_op = true;
        acted.detail = std::string("no-op: ") + e.what();
      }
      stats_add(result.stats, acted);

      // A no-op leaves the set unchanged, so the cache returns the same
      // score; skipping the lookup keeps the record honest either way.
      if (!no_op) current = evaluator.score(fs);

      rec.no_op = no_op;
      rec.fallback = rec.fallback || acted.fallback;
      rec.agent_detail = acted.detail;
      rec.tokens = fs.token_sequence();
      rec.score = current.primary;
      // One transcript per record: the acting agent's when it spoke,
      // otherwise whatever the router produced.
      if (!acted.prompt.empty() || !acted.reply.empty()) {
        rec.prompt = acted.prompt;
        rec.reply = acted.reply;
      }
      if (rec.fallback) result.stats.llm_fallbacks += 1;
      if (no_op) result.stats.no_ops += 1;
      result.pool.append(rec);

      prev_score = progress.current_score;
      last = routed.decision;
      if (current.primary > result.best_report.primary) {
        result.best = fs;
        result.best_report = current;
      }
    }
  }

  result.stats.evaluations = evaluator.evaluations();
  result.stats.cache_hits = evaluator.cache_hits();
  result.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoRl: return "no_rl";
    case Variant::NoRouter: return "no_router";
    case Variant::NoLong: return "no_long";
    case Variant::NoShort: return "no_short";
  }
  return "full";
}

Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "no_rl") return Variant::NoRl;
  if (name == "no_router") return Variant::NoRouter;
  if (name == "no_long") return Variant::NoLong;
  if (name == "no_short") return Variant::NoShort;
  throw Error(ErrorCode::ConfigError, "unknown ablation variant: " + name);
}

SearchResult run_ablation(const data::Frame& frame, const SearchConfig& base,
                          Variant variant) {
  SearchConfig cfg = base;
  switch (variant) {
    case Variant::Full:
      break;
    case Variant::NoRl: {
      // Same architecture, fresh weights: routing stays learned-policy
      // shaped but carries no training signal.
      rl::PolicyNet untrained(cfg.seed);
      cfg.router = agents::RouterMode::Ppo;
      cfg.policy = &untrained;
      return run(frame, cfg);
    }
    case Variant::NoRouter:
      cfg.router = agents::RouterMode::Uniform;
      break;
    case Variant::NoLong:
      cfg.use_long_memory = false;
      break;
    case Variant::NoShort:
      cfg.use_short_memory = false;
      break;
  }
  return run(frame, cfg);
}

void export_result(const data::Frame& frame, const SearchResult& result,
                   const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  const data::FeatureMatrix m = pipeline::materialize(result.best, frame);
  const std::string csv_path = dir + "/augmented.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorCode::IoError, "cannot write " + csv_path);
  for (const auto& n : m.names) csv << n << ',';
  csv << frame.target_name() << '\n';
  const bool classed = frame.task() == data::Task::Classification;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (const auto& col : m.cols) csv << full_precision(col[r]) << ',';
    if (classed)
      csv << frame.class_labels()[static_cast<std::size_t>(
          frame.target()[r])];
    else
      csv << full_precision(frame.target()[r]);
    csv << '\n';
  }
  if (!csv.good()) throw Error(ErrorCode::IoError, "short write: " + csv_path);

  const auto& best = result.best;
  const auto& base = best.base_names();
  std::vector<std::string> kept, dropped;
  for (std::size_t i = 0; i < base.size(); ++i)
    (best.mask()[i] ? kept : dropped).push_back(base[i]);
  std::vector<std::string> generated;
  const auto live_names = best.live_names();
  for (std::size_t i = 0; i < best.derived().size(); ++i)
    if (best.mask()[base.size() + i]) {
      const auto& e = best.derived()[i];
      generated.push_back(live_names[kept.size() + generated.size()] + " = " +
                          expr::render_infix(e));
    }

  const std::string rep_path = dir + "/provenance.txt";
  std::ofstream rep(rep_path);
  if (!rep) throw Error(ErrorCode::IoError, "cannot write " + rep_path);
  rep << "best score " << full_precision(result.best_report.primary)
      << " vs baseline " << full_precision(result.baseline_report.primary)
      << "\n";
  rep << "generated " << generated.size() << " new features, dropped "
      << dropped.size() << " of " << base.size() << " originals\n\n";
  rep << "kept originals (" << kept.size() << "):\n";
  for (const auto& n : kept) rep << "  " << n << '\n';
  rep << "dropped originals (" << dropped.size() << "):\n";
  for (const auto& n : dropped) rep << "  " << n << '\n';
  rep << "generated features (" << generated.size() << "):\n";
  for (const auto& g : generated) rep << "  " << g << '\n';
  if (!rep.good()) throw Error(ErrorCode::IoError, "short write: " + rep_path);
}

}  // namespace featforge::search
