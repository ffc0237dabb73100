#include "featforge/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "featforge/errors.hpp"

namespace featforge::rl {

namespace {

constexpr std::size_t kMaxCorrFeatures = 30;

double decision_code(Decision d) {
  switch (d) {
    case Decision::Generate: return 0.0;
    case Decision::Select: return 1.0;
    case Decision::None: return -1.0;
  }
  return -1.0;
}

}  // namespace

RouterState featurize(const pipeline::FeatureSet& fs, const data::Frame& frame,
                      const SearchProgress& p) {
  RouterState st;
  const double base = static_cast<double>(fs.base_names().size());
  const double live = static_cast<double>(fs.live_count());
  st[RouterState::kLiveRatio] = live / base;
  st[RouterState::kLogBaseCount] = std::log(base);
  st[RouterState::kStepFraction] =
      p.n_steps > 0 ? static_cast<double>(p.step) / p.n_steps : 0.0;
  st[RouterState::kIterFraction] =
      p.n_iterations > 0 ? static_cast<double>(p.iteration) / p.n_iterations
                         : 0.0;
  st[RouterState::kCurrentScore] = p.current_score;
  st[RouterState::kBestScore] = p.best_score;
  st[RouterState::kScoreDelta] = p.current_score - p.prev_score;

  data::FeatureMatrix m = pipeline::materialize(fs, frame);
  const std::size_t w = std::min(m.n_cols(), kMaxCorrFeatures);
  double pair_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < w; ++i) {
    for (std::size_t j = i + 1; j < w; ++j) {
      pair_sum += std::fabs(data::pearson(m.cols[i], m.cols[j]));
      ++pairs;
    }
  }
  st[RouterState::kMeanPairAbsCorr] = pairs ? pair_sum / pairs : 0.0;

  double target_sum = 0.0;
  for (const auto& col : m.cols)
    target_sum += std::fabs(data::pearson(col, frame.target()));
  st[RouterState::kMeanTargetAbsCorr] =
      m.n_cols() ? target_sum / m.n_cols() : 0.0;

  st[RouterState::kDerivedFraction] =
      live > 0 ? static_cast<double>(fs.live_derived_count()) / live : 0.0;
  st[RouterState::kTaskFlag] =
      frame.task() == data::Task::Classification ? 1.0 : 0.0;
  st[RouterState::kLastDecision] = decision_code(p.last_decision);
  return st;
}

std::vector<OfflineSample> collect(const MemoryPool& pool, int group) {
  std::vector<OfflineSample> out;
  for (const ActionRecord& r : pool.records()) {
    if (r.decision == Decision::None) continue;
    OfflineSample s;
    s.state = r.state;
    s.action = r.decision == Decision::Generate ? 0 : 1;
    s.behavior_prob = r.behavior_prob;
    s.score = r.score;
    s.group = group;
    out.push_back(s);
  }
  return out;
}

std::vector<double> advantages(const std::vector<OfflineSample>& samples) {
  if (samples.size() < 2)
    throw Error(ErrorCode::TooFewSamples,
                "need at least 2 samples to normalize rewards");
  std::map<int, std::pair<double, double>> acc;  // group -> (sum, count)
  for (const auto& s : samples) {
    acc[s.group].first += s.score;
    acc[s.group].second += 1.0;
  }
  std::map<int, double> mean, var;
  for (const auto& [g, sc] : acc) mean[g] = sc.first / sc.second;
  for (const auto& s : samples) {
    const double d = s.score - mean[s.group];
    var[s.group] += d * d / acc[s.group].second;
  }
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const double sd = std::sqrt(var[s.group]);
    out.push_back((s.score - mean[s.group]) / (sd + 1e-8));
  }
  return out;
}

PolicyNet::PolicyNet(std::uint64_t seed)
    : w1_(kHidden * kIn), b1_(kHidden, 0.0), w2_(kOut * kHidden),
      b2_(kOut, 0.0) {
  Rng rng(seed_mix(seed, 0x9019CE17ULL));
  for (double& w : w1_) w = 0.1 * rng.normal();
  for (double& w : w2_) w = 0.1 * rng.normal();
}

std::array<double, PolicyNet::kOut> PolicyNet::probs(
    const RouterState& s) const {
  std::array<double, kHidden> h;
  for (int i = 0; i < kHidden; ++i) {
    double z = b1_[i];
    for (int j = 0; j < kIn; ++j) z += w1_[i * kIn + j] * s[j];
    h[i] = std::tanh(z);
  }
  std::array<double, kOut> logits;
  for (int k = 0; k < kOut; ++k) {
    double z = b2_[k];
    for (int i = 0; i < kHidden; ++i) z += w2_[k * kHidden + i] * h[i];
    logits[k] = z;
  }
  const double top = std::max(logits[0], logits[1]);
  std::array<double, kOut> p;
  double total = 0.0;
  for (int k = 0; k < kOut; ++k) {
    p[k] = std::exp(logits[k] - top);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

std::size_t PolicyNet::n_params() const {
  return w1_.size() + b1_.size() + w2_.size() + b2_.size();
}

std::vector<double> PolicyNet::params() const {
  std::vector<double> flat;
  flat.reserve(n_params());
  flat.insert(flat.end(), w1_.begin(), w1_.end());
  flat.insert(flat.end(), b1_.begin(), b1_.end());
  flat.insert(flat.end(), w2_.begin(), w2_.end());
  flat.insert(flat.end(), b2_.begin(), b2_.end());
  return flat;
}

void PolicyNet::set_params(const std::vector<double>& flat) {
  if (flat.size() != n_params())
    throw Error(ErrorCode::ConfigError, "parameter vector has wrong length");
  auto it = flat.begin();
  auto take = [&](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(w1_);
  take(b1_);
  take(w2_);
  take(b2_);
}

namespace {

constexpr char kPolicyMagic[4] = {'F', 'F', 'R', 'P'};
constexpr std::uint32_t kPolicyVersion = 1;

}  // namespace

void PolicyNet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  out.write(kPolicyMagic, 4);
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_u32(kPolicyVersion);
  put_u32(static_cast<std::uint32_t>(kIn));
  put_u32(static_cast<std::uint32_t>(kHidden));
  put_u32(static_cast<std::uint32_t>(kOut));
  const std::vector<double> flat = params();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

PolicyNet PolicyNet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPolicyMagic, 4) != 0)
    throw Error(ErrorCode::VersionMismatch,
                "'" + path + "' is not a router policy file");
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  const std::uint32_t version = get_u32();
  const std::uint32_t in_dim = get_u32();
  const std::uint32_t hidden = get_u32();
  const std::uint32_t out_dim = get_u32();
  if (!in || version != kPolicyVersion || in_dim != kIn || hidden != kHidden ||
      out_dim != kOut) {
    std::ostringstream msg;
    msg << "'" << path << "' has unsupported version/shape (version "
        << version << ", " << in_dim << "x" << hidden << "x" << out_dim << ")";
    throw Error(ErrorCode::VersionMismatch, msg.str());
  }
  PolicyNet net(0);
  std::vector<double> flat(net.n_params());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in || in.gcount() !=
                 static_cast<std::streamsize>(flat.size() * sizeof(double)))
    throw Error(ErrorCode::VersionMismatch, "'" + path + "' is truncated");
  net.set_params(flat);
  return net;
}

// Per-sample forward/backward pass shared by the objective, the analytic
// gradient, and the trainer.
struct PolicyGrads {
  const PolicyNet& net;

  explicit PolicyGrads(const PolicyNet& n) : net(n) {}

  // Returns the per-sample objective term; accumulates d(term)/d(params)
  // into `grad` (same layout as params()) when grad is non-null.
  double accumulate(const OfflineSample& s, double advantage,
                    const PPOConfig& cfg, std::vector<double>* grad) const {
    std::array<double, PolicyNet::kHidden> h;
    for (int i = 0; i < PolicyNet::kHidden; ++i) {
      double z = net.b1_[i];
      for (int j = 0; j < PolicyNet::kIn; ++j)
        z += net.w1_[i * PolicyNet::kIn + j] * s.state[j];
      h[i] = std::tanh(z);
    }
    std::array<double, PolicyNet::kOut> logits;
    for (int k = 0; k < PolicyNet::kOut; ++k) {
      double z = net.b2_[k];
      for (int i = 0; i < PolicyNet::kHidden; ++i)
        z += net.w2_[k * PolicyNet::kHidden + i] * h[i];
      logits[k] = z;
    }
    const double top = std::max(logits[0], logits[1]);
    std::array<double, PolicyNet::kOut> p;
    double total = 0.0;
    for (int k = 0; k < PolicyNet::kOut; ++k) {
      p[k] = std::exp(logits[k] - top);
      total += p[k];
    }
    for (double& v : p) v /= total;

    const double ratio = p[s.action] / s.behavior_prob;
    const double lo = 1.0 - cfg.clip, hi = 1.0 + cfg.clip;
    const double clipped = std::clamp(ratio, lo, hi);
    const double u = ratio * advantage;
    const double v = clipped * advantage;
    const bool unclipped_active = u <= v;

    double entropy = 0.0;
    for (double q : p) entropy -= q * std::log(q);
    const double term = std::min(u, v) + cfg.entropy_coef * entropy;
    if (grad == nullptr) return term;

    // d(term)/d(logit_k), combining the active surrogate branch and the
    // entropy bonus.
    const double coef = unclipped_active ? advantage / s.behavior_prob : 0.0;
    std::array<double, PolicyNet::kOut> dz2;
    for (int k = 0; k < PolicyNet::kOut; ++k) {
      const double indicator = k == s.action ? 1.0 : 0.0;
      dz2[k] = coef * p[s.action] * (indicator - p[k]) -
               cfg.entropy_coef * p[k] * (std::log(p[k]) + entropy);
    }

    const std::size_t ow1 = 0;
    const std::size_t ob1 = ow1 + net.w1_.size();
    const std::size_t ow2 = ob1 + net.b1_.size();
    const std::size_t ob2 = ow2 + net.w2_.size();
    std::array<double, PolicyNet::kHidden> dh{};
    for (int k = 0; k < PolicyNet::kOut; ++k) {
      (*grad)[ob2 + static_cast<std::size_t>(k)] += dz2[k];
      for (int i = 0; i < PolicyNet::kHidden; ++i) {
        (*grad)[ow2 + static_cast<std::size_t>(k * PolicyNet::kHidden + i)] +=
            dz2[k] * h[i];
        dh[i] += dz2[k] * net.w2_[k * PolicyNet::kHidden + i];
      }
    }
    for (int i = 0; i < PolicyNet::kHidden; ++i) {
      const double dz1 = dh[i] * (1.0 - h[i] * h[i]);
      (*grad)[ob1 + static_cast<std::size_t>(i)] += dz1;
      for (int j = 0; j < PolicyNet::kIn; ++j)
        (*grad)[ow1 + static_cast<std::size_t>(i * PolicyNet::kIn + j)] +=
            dz1 * s.state[j];
    }
    return term;
  }
};

namespace {

// Mean objective over the index subset; mean gradient if grad != nullptr.
double batch_objective(const PolicyNet& policy,
                       const std::vector<OfflineSample>& samples,
                       const std::vector<double>& adv,
                       const std::vector<std::size_t>& idx,
                       const PPOConfig& cfg, std::vector<double>* grad) {
  PolicyGrads pg(policy);
  double total = 0.0;
  for (std::size_t i : idx) total += pg.accumulate(samples[i], adv[i], cfg, grad);
  const double inv = 1.0 / static_cast<double>(idx.size());
  if (grad != nullptr)
    for (double& g : *grad) g *= inv;
  return total * inv;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

double ppo_objective(const PolicyNet& policy,
                     const std::vector<OfflineSample>& samples,
                     const PPOConfig& cfg) {
  const std::vector<double> adv = advantages(samples);
  return batch_objective(policy, samples, adv, all_indices(samples.size()),
                         cfg, nullptr);
}

std::vector<double> ppo_gradient(const PolicyNet& policy,
                                 const std::vector<OfflineSample>& samples,
                                 const PPOConfig& cfg) {
  const std::vector<double> adv = advantages(samples);
  std::vector<double> grad(policy.n_params(), 0.0);
  batch_objective(policy, samples, adv, all_indices(samples.size()), cfg,
                  &grad);
  return grad;
}

TrainReport ppo_update(PolicyNet& policy,
                       const std::vector<OfflineSample>& samples,
                       const PPOConfig& cfg, Rng& rng) {
  if (cfg.epochs < 1 || cfg.minibatch < 1 || cfg.clip <= 0.0 ||
      cfg.clip >= 1.0)
    throw Error(ErrorCode::ConfigError, "bad PPO configuration");
  const std::vector<double> adv = advantages(samples);

  std::vector<double> theta = policy.params();
  const std::size_t n = theta.size();
  std::vector<double> m(n, 0.0), v(n, 0.0), grad(n);
  // Adam epsilon is deliberately large: near-zero gradients (an entropy-only
  // batch, say) must produce proportionally near-zero steps instead of being
  // renormalized to full learning-rate strides.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-3;
  int step = 0;

  TrainReport report;
  report.samples = static_cast<int>(samples.size());
  report.epochs = cfg.epochs;

  std::vector<std::size_t> order = all_indices(samples.size());
  std::vector<std::size_t> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double obj_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::fill(grad.begin(), grad.end(), 0.0);
      obj_sum += batch_objective(policy, samples, adv, batch, cfg, &grad);
      ++n_batches;

      double norm_sq = 0.0;
      for (double g : grad) norm_sq += g * g;
      if (!std::isfinite(norm_sq)) {
        std::ostringstream msg;
        msg << "non-finite gradient in epoch " << epoch << ", batch "
            << n_batches - 1;
        throw Error(ErrorCode::NonFiniteGradient, msg.str());
      }
      const double norm = std::sqrt(norm_sq);
      const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, step);
      const double bc2 = 1.0 - std::pow(beta2, step);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i] * scale;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        theta[i] +=
            cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
      policy.set_params(theta);
    }
    report.epoch_objective.push_back(obj_sum / n_batches);
  }
  return report;
}

nlohmann::json TrainReport::to_json() const {
  return nlohmann::json{{"samples", samples},
                        {"epochs", epochs},
                        {"epoch_objective", epoch_objective}};
}

std::vector<OfflineSample> make_bandit_dataset(int n, std::uint64_t seed) {
  Rng rng(seed_mix(seed, 0xBA4D17ULL));
  std::vector<OfflineSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    OfflineSample s;
    for (std::size_t d = 0; d < RouterState::kDim; ++d)
      s.state[d] = rng.normal();
    s.action = rng.bernoulli(0.5) ? 1 : 0;
    const int scoring = s.state[0] > 0.0 ? 0 : 1;
    s.score = s.action == scoring ? 1.0 : 0.0;
    s.behavior_prob = 0.5;
    out.push_back(s);
  }
  return out;
}

double bandit_accuracy(const PolicyNet& policy, int n, std::uint64_t seed) {
  Rng rng(seed_mix(seed, 0xBA4D17ULL));
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    RouterState s;
    for (std::size_t d = 0; d < RouterState::kDim; ++d) s[d] = rng.normal();
    rng.bernoulli(0.5);  // keep the stream aligned with dataset generation
    const int scoring = s[0] > 0.0 ? 0 : 1;
    const auto p = policy.probs(s);
    const int picked = p[0] >= p[1] ? 0 : 1;
    hits += picked == scoring ? 1 : 0;
  }
  return static_cast<double>(hits) / n;
}

}  // namespace featforge::rl
