#pragma once

#include <map>
#include <string>
#include <vector>

#include "featforge/data.hpp"
#include "featforge/expr.hpp"
#include "featforge/llm.hpp"
#include "featforge/memory.hpp"
#include "featforge/pipeline.hpp"
#include "featforge/rl.hpp"
#include "featforge/rng.hpp"

namespace featforge::agents {

enum class RouterMode { Uniform, Ppo, Llm };
enum class AgentMode { Heuristic, Llm };

const char* router_mode_name(RouterMode m);
RouterMode router_mode_from_name(const std::string& name);
const char* agent_mode_name(AgentMode m);
AgentMode agent_mode_from_name(const std::string& name);

struct TaskMeta {
  std::string dataset_name = "dataset";
  data::Task task = data::Task::Regression;
  std::string metric;  // filled from the task when empty
};

struct FeatureSummary {
  std::string name;
  data::ColumnStats stats;
  double target_corr = 0.0;  // signed Pearson correlation with the target
};

// Everything an agent may look at when acting. The frame and feature set
// are borrowed; the context never outlives the search step that built it.
struct AgentContext {
  TaskMeta meta;
  std::vector<FeatureSummary> live;       // live features in column order
  std::vector<ActionRecord> short_term;   // this iteration, agent-filtered
  std::vector<ActionRecord> demos;        // long-term sample, sampled order
  std::vector<std::string> operators;
  int remaining_steps = 0;
  int prompt_token_budget = 2048;
  std::map<std::string, double> importance;  // last evaluation, may be empty
  const data::Frame* frame = nullptr;
  const pipeline::FeatureSet* fs = nullptr;
};

// All operator spellings, unary first.
std::vector<std::string> operator_roster();

// Assembles the context for one action: live-feature summaries from the
// materialized matrix, plus memory views honoring the ablation flags.
// Sampling demos consumes the rng.
AgentContext make_context(const data::Frame& frame,
                          const pipeline::FeatureSet& fs,
                          const MemoryPool& pool, int iteration,
                          AgentKind agent, bool use_short, bool use_long,
                          Rng& rng,
                          const std::map<std::string, double>& importance,
                          int remaining_steps, TaskMeta meta);

// Bookkeeping attached to every agent decision for the trace record.
struct ActionMeta {
  bool fallback = false;  // LLM path degraded to the deterministic backend
  std::string detail;
  std::string prompt;  // set only when an LLM call was made
  std::string reply;
  int llm_calls = 0;
  int prompt_tokens = 0;
  int reply_tokens = 0;
};

struct RouterPolicy {
  RouterMode mode = RouterMode::Uniform;
  const rl::PolicyNet* net = nullptr;   // required for Ppo
  llm::Transport* transport = nullptr;  // required for Llm
  llm::LlmConfig llm;
};

struct AgentPolicy {
  AgentMode mode = AgentMode::Heuristic;
  llm::Transport* transport = nullptr;  // required for Llm
  llm::LlmConfig llm;
};

struct RouteResult {
  Decision decision = Decision::Generate;
  double prob = 0.5;  // acting policy's probability of `decision`
  ActionMeta meta;
};

struct GenerateResult {
  pipeline::GenerationAction action;
  ActionMeta meta;
};

struct SelectResult {
  pipeline::SelectionAction action;
  ActionMeta meta;
};

// Picks generation or selection. Uniform mode flips a fair coin; Ppo
// samples from the policy network; Llm asks the endpoint and falls back to
// the uniform coin (flagged) when calls or parsing fail repeatedly.
RouteResult route(const RouterPolicy& policy, const rl::RouterState& state,
                  const AgentContext& ctx, Rng& rng);

// Proposes 1-3 new expressions. The heuristic samples 8 candidates
// (operands weighted by |target correlation| + 0.05, operator uniform,
// composing live expressions) and keeps the best-correlating novel ones.
// Throws NoValidAction when nothing novel and in-cap can be built.
GenerateResult generate(const AgentPolicy& policy, const AgentContext& ctx,
                        Rng& rng);

// Proposes features to drop. The heuristic drops ceil(10% of live) with the
// lowest importance (evaluation importances when available, |target
// correlation| otherwise). Throws NoValidAction at the feature floor.
SelectResult select(const AgentPolicy& policy, const AgentContext& ctx,
                    Rng& rng);

// Renders the deterministic prompt for a role. Demos are evicted oldest
// first when the 4-chars-per-token estimate exceeds the context budget;
// throws ContextOverflow when the prompt cannot be reduced below it.
llm::PromptBundle build_prompt(AgentKind role, const AgentContext& ctx);

// Reply parsers: extract the first balanced {...} block and validate the
// role schema strictly. All failures throw ParseFailure.
Decision parse_router_reply(const std::string& text);
std::vector<expr::FeatureExpr> parse_generator_reply(
    const std::string& text, const std::vector<std::string>& schema,
    const expr::ExprLimits& limits);
std::vector<std::string> parse_selector_reply(const std::string& text);

}  // namespace featforge::agents
