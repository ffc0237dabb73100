#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "featforge/data.hpp"
#include "featforge/memory.hpp"
#include "featforge/pipeline.hpp"
#include "featforge/rng.hpp"
#include "featforge/router_state.hpp"

namespace featforge::rl {

// Loop position and running scores at the moment a decision is made. A run
// that has produced no score yet passes zeros; the featurizer does not
// invent values.
struct SearchProgress {
  int iteration = 0;
  int n_iterations = 1;
  int step = 0;
  int n_steps = 1;
  double current_score = 0.0;
  double best_score = 0.0;
  double prev_score = 0.0;
  Decision last_decision = Decision::None;
};

// Builds the 12-component router input. Pairwise correlation is averaged
// over the first 30 live columns only, to bound cost on wide sets; the
// target correlation averages over every live column.
RouterState featurize(const pipeline::FeatureSet& fs, const data::Frame& frame,
                      const SearchProgress& progress);

// One routing decision ready for offline training. `group` identifies the
// source trace so rewards are normalized against runs of the same dataset.
struct OfflineSample {
  RouterState state;
  int action = 0;  // 0 generate, 1 select
  double behavior_prob = 0.5;
  double score = 0.0;
  int group = 0;
};

// Turns a pool into training samples, skipping the baseline record (it
// carries no decision).
std::vector<OfflineSample> collect(const MemoryPool& pool, int group = 0);

// Rewards z-scored within each group: (score - mean) / (std + 1e-8).
std::vector<double> advantages(const std::vector<OfflineSample>& samples);

// Two-layer softmax policy over RouterState. The parameter layout
// (W1 row-major, b1, W2 row-major, b2) is part of the saved-policy format.
class PolicyNet {
 public:
  static constexpr int kIn = static_cast<int>(RouterState::kDim);
  static constexpr int kHidden = 32;
  static constexpr int kOut = 2;

  explicit PolicyNet(std::uint64_t seed);

  std::array<double, kOut> probs(const RouterState& s) const;

  std::size_t n_params() const;
  std::vector<double> params() const;
  void set_params(const std::vector<double>& flat);

  void save(const std::string& path) const;
  static PolicyNet load(const std::string& path);

 private:
  friend struct PolicyGrads;
  std::vector<double> w1_;  // kHidden x kIn
  std::vector<double> b1_;  // kHidden
  std::vector<double> w2_;  // kOut x kHidden
  std::vector<double> b2_;  // kOut
};

struct PPOConfig {
  double clip = 0.2;
  int epochs = 5;
  double learning_rate = 3e-3;
  int minibatch = 64;
  double entropy_coef = 0.01;
  double grad_clip = 1.0;
};

struct TrainReport {
  int samples = 0;
  int epochs = 0;
  std::vector<double> epoch_objective;  // mean clipped surrogate + entropy

  nlohmann::json to_json() const;
};

// Mean clipped-surrogate objective (plus entropy bonus) over the samples,
// with advantages computed over the full set. Exposed so the analytic
// gradient can be checked against finite differences.
double ppo_objective(const PolicyNet& policy,
                     const std::vector<OfflineSample>& samples,
                     const PPOConfig& cfg);
std::vector<double> ppo_gradient(const PolicyNet& policy,
                                 const std::vector<OfflineSample>& samples,
                                 const PPOConfig& cfg);

// Ascends the clipped objective with Adam over shuffled minibatches.
// Advantages are fixed up front from the full sample set.
TrainReport ppo_update(PolicyNet& policy,
                       const std::vector<OfflineSample>& samples,
                       const PPOConfig& cfg, Rng& rng);

// Synthetic routing problem for self-tests: state[0] > 0 means action 0
// earns score 1, otherwise action 1 does; behavior is uniform.
std::vector<OfflineSample> make_bandit_dataset(int n, std::uint64_t seed);

// Fraction of fresh bandit states where argmax probs picks the scoring
// action.
double bandit_accuracy(const PolicyNet& policy, int n, std::uint64_t seed);

}  // namespace featforge::rl
