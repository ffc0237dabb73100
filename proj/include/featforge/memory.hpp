#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "featforge/rng.hpp"
#include "featforge/router_state.hpp"

namespace featforge {

enum class Decision : std::uint8_t { Generate, Select, None };

// None is only used for the baseline record written before the first step.
const char* decision_name(Decision d);
Decision decision_from_name(const std::string& name);

enum class AgentKind : std::uint8_t { Router, Generator, Selector };

// One completed step of the search loop. `state` is the router input
// captured before the decision was made; `tokens` and `score` describe the
// feature set after the step's action was applied (unchanged on a no-op).
struct ActionRecord {
  int iteration = 0;  // -1 for the baseline record
  int step = 0;
  Decision decision = Decision::None;
  std::string agent_detail;  // short human-readable account of the action
  std::string tokens;        // postfix token sequence of the live set
  double score = 0.0;
  rl::RouterState state;
  double behavior_prob = 0.5;  // probability the acting policy assigned
  bool fallback = false;       // action came from the heuristic fallback
  bool no_op = false;
  std::string prompt;  // transcript capture, only set in LLM mode
  std::string reply;

  nlohmann::json to_json() const;
  static ActionRecord from_json(const nlohmann::json& j);
};

// Append-only store of step records shared by all agents during a run.
// Short-term recall filters by iteration and agent; long-term recall samples
// demonstrations from the best-scoring records across the whole run.
class MemoryPool {
 public:
  explicit MemoryPool(int top_pool = 20, int demos = 4);

  // Rejects a second record with the same (iteration, step).
  void append(ActionRecord record);

  const std::vector<ActionRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Records from `iteration` visible to `agent`: generators see generation
  // steps, selectors see selection steps, the router sees every step.
  std::vector<ActionRecord> short_term(int iteration, AgentKind agent) const;

  // Prior-run records that join long-term retrieval only: invisible to
  // short_term, top_indices, best, and save_jsonl, and exempt from the
  // (iteration, step) key check since their numbering overlaps this run's.
  void preload(std::vector<ActionRecord> records);
  const std::vector<ActionRecord>& preloaded() const { return preloaded_; }

  // Uniform sample of min(demos, available) distinct records from the
  // top `top_pool` records by score (ties kept in append order, this run's
  // records ahead of preloaded ones).
  std::vector<ActionRecord> long_term_sample(Rng& rng) const;

  // Indices into records() of the current top pool, best score first.
  std::vector<std::size_t> top_indices() const;

  // Highest-scoring record; the earliest one wins ties.
  const ActionRecord& best() const;

  void save_jsonl(const std::string& path) const;
  static MemoryPool load_jsonl(const std::string& path, int top_pool = 20,
                               int demos = 4);

  int top_pool() const { return top_pool_; }
  int demos() const { return demos_; }

 private:
  int top_pool_;
  int demos_;
  std::vector<ActionRecord> records_;
  std::vector<ActionRecord> preloaded_;
};

}  // namespace featforge
