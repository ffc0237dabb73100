#include "featforge/memory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "featforge/errors.hpp"

namespace featforge {

const char* decision_name(Decision d) {
  switch (d) {
    case Decision::Generate: return "generation";
    case Decision::Select: return "selection";
    case Decision::None: return "baseline";
  }
  return "baseline";
}

Decision decision_from_name(const std::string& name) {
  if (name == "generation") return Decision::Generate;
  if (name == "selection") return Decision::Select;
  if (name == "baseline") return Decision::None;
  throw Error(ErrorCode::ParseError, "unknown decision '" + name + "'");
}

nlohmann::json ActionRecord::to_json() const {
  nlohmann::json j{
      {"iteration", iteration},
      {"step", step},
      {"decision", decision_name(decision)},
      {"agent_detail", agent_detail},
      {"tokens", tokens},
      {"score", score},
      {"state", state.to_json()},
      {"behavior_prob", behavior_prob},
      {"fallback", fallback},
      {"no_op", no_op},
  };
  if (!prompt.empty()) j["prompt"] = prompt;
  if (!reply.empty()) j["reply"] = reply;
  return j;
}

ActionRecord ActionRecord::from_json(const nlohmann::json& j) {
  ActionRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.step = j.at("step").get<int>();
  r.decision = decision_from_name(j.at("decision").get<std::string>());
  r.agent_detail = j.at("agent_detail").get<std::string>();
  r.tokens = j.at("tokens").get<std::string>();
  r.score = j.at("score").get<double>();
  r.state = rl::RouterState::from_json(j.at("state"));
  r.behavior_prob = j.at("behavior_prob").get<double>();
  r.fallback = j.at("fallback").get<bool>();
  r.no_op = j.at("no_op").get<bool>();
  if (j.contains("prompt")) r.prompt = j.at("prompt").get<std::string>();
  if (j.contains("reply")) r.reply = j.at("reply").get<std::string>();
  return r;
}

MemoryPool::MemoryPool(int top_pool, int demos)
    : top_pool_(top_pool), demos_(demos) {
  if (top_pool < 1 || demos < 1)
    throw Error(ErrorCode::ConfigError, "memory pool sizes must be positive");
}

void MemoryPool::append(ActionRecord record) {
  for (const ActionRecord& r : records_) {
    if (r.iteration == record.iteration && r.step == record.step) {
      std::ostringstream msg;
      msg << "record (" << record.iteration << ", " << record.step
          << ") already present";
      throw Error(ErrorCode::DuplicateKey, msg.str());
    }
  }
  records_.push_back(std::move(record));
}

std::vector<ActionRecord> MemoryPool::short_term(int iteration,
                                                 AgentKind agent) const {
  std::vector<ActionRecord> out;
  for (const ActionRecord& r : records_) {
    if (r.iteration != iteration) continue;
    if (agent == AgentKind::Generator && r.decision != Decision::Generate)
      continue;
    if (agent == AgentKind::Selector && r.decision != Decision::Select)
      continue;
    out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> MemoryPool::top_indices() const {
  std::vector<std::size_t> idx(records_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return records_[a].score > records_[b].score;
  });
  if (idx.size() > static_cast<std::size_t>(top_pool_))
    idx.resize(static_cast<std::size_t>(top_pool_));
  return idx;
}

void MemoryPool::preload(std::vector<ActionRecord> records) {
  preloaded_.insert(preloaded_.end(),
                    std::make_move_iterator(records.begin()),
                    std::make_move_iterator(records.end()));
}

std::vector<ActionRecord> MemoryPool::long_term_sample(Rng& rng) const {
  if (records_.empty() && preloaded_.empty())
    throw Error(ErrorCode::EmptyPool, "no records stored");
  std::vector<const ActionRecord*> pool;
  pool.reserve(records_.size() + preloaded_.size());
  for (const ActionRecord& r : records_) pool.push_back(&r);
  for (const ActionRecord& r : preloaded_) pool.push_back(&r);
  std::stable_sort(pool.begin(), pool.end(),
                   [](const ActionRecord* a, const ActionRecord* b) {
                     return a->score > b->score;
                   });
  if (pool.size() > static_cast<std::size_t>(top_pool_))
    pool.resize(static_cast<std::size_t>(top_pool_));
  std::size_t want =
      std::min(pool.size(), static_cast<std::size_t>(demos_));
  std::vector<std::size_t> picks = rng.sample_indices(pool.size(), want);
  std::vector<ActionRecord> out;
  out.reserve(want);
  for (std::size_t p : picks) out.push_back(*pool[p]);
  return out;
}

const ActionRecord& MemoryPool::best() const {
  if (records_.empty()) throw Error(ErrorCode::EmptyPool, "no records stored");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < records_.size(); ++i) {
    if (records_[i].score > records_[arg].score) arg = i;
  }
  return records_[arg];
}

void MemoryPool::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  for (const ActionRecord& r : records_) out << r.to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

MemoryPool MemoryPool::load_jsonl(const std::string& path, int top_pool,
                                  int demos) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  MemoryPool pool(top_pool, demos);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      std::ostringstream msg;
      msg << "bad record on line " << line_no << " of '" << path << "'";
      throw Error(ErrorCode::ParseError, msg.str());
    }
    pool.append(ActionRecord::from_json(j));
  }
  return pool;
}

}  // namespace featforge
