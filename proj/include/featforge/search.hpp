#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "featforge/agents.hpp"
#include "featforge/data.hpp"
#include "featforge/eval.hpp"
#include "featforge/llm.hpp"
#include "featforge/memory.hpp"
#include "featforge/pipeline.hpp"
#include "featforge/rl.hpp"

namespace featforge::search {

struct SearchConfig {
  int iterations = 30;
  int steps = 6;
  agents::RouterMode router = agents::RouterMode::Uniform;
  agents::AgentMode agents = agents::AgentMode::Heuristic;
  bool use_long_memory = true;
  bool use_short_memory = true;
  std::uint64_t seed = 0;

  eval::ModelKind model = eval::ModelKind::RandomForest;
  int folds = 5;
  pipeline::SetLimits limits;
  int top_pool = 20;
  int demos = 4;
  int prompt_token_budget = 2048;
  agents::TaskMeta meta;

  // Prior-run records seeding long-term memory; see MemoryPool::preload.
  std::vector<ActionRecord> preload;

  // Borrowed plumbing: the policy net backs ppo routing, the transport
  // backs any llm mode. Both stay owned by the caller.
  const rl::PolicyNet* policy = nullptr;
  llm::Transport* transport = nullptr;
  llm::LlmConfig llm;
};

struct RunStats {
  std::size_t evaluations = 0;  // model fits, cache misses only
  std::size_t cache_hits = 0;
  std::size_t llm_calls = 0;      // logical completions, retries not counted
  std::size_t llm_fallbacks = 0;  // records flagged fallback
  std::size_t no_ops = 0;
  double wall_seconds = 0.0;
};

struct SearchResult {
  pipeline::FeatureSet best;
  eval::ScoreReport best_report;
  eval::ScoreReport baseline_report;
  MemoryPool pool;
  RunStats stats;

  // Run summary for result files: scores, counts, and the best set's
  // provenance. Wall time is included; trace files carry determinism.
  nlohmann::json to_json() const;
};

// The restart search: evaluates the raw set once as the baseline record,
// then runs `iterations` passes that each reset to the raw set and take
// `steps` routed actions. Every action is evaluated and appended to the
// pool; agent refusals (nothing valid to do) become no-op records carrying
// the previous score. The best-scoring set across all records wins; the
// raw set is the floor, so the result never regresses below the input.
SearchResult run(const data::Frame& frame, const SearchConfig& config);

enum class Variant { Full, NoRl, NoRouter, NoLong, NoShort };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Ablation harness. no_rl swaps the router to a freshly initialized,
// untrained policy net; no_router forces the uniform coin; no_long and
// no_short blank the corresponding memory sections in every context.
SearchResult run_ablation(const data::Frame& frame, const SearchConfig& base,
                          Variant variant);

// Writes <dir>/augmented.csv (best materialized matrix plus the original
// target column, full-precision) and <dir>/provenance.txt (kept originals,
// dropped originals, generated expressions in infix form, with counts).
void export_result(const data::Frame& frame, const SearchResult& result,
                   const std::string& dir);

}  // namespace featforge::search
