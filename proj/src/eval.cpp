#include "featforge/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "featforge/errors.hpp"
#include "featforge/rng.hpp"

namespace featforge::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> complement_rows(const data::FoldPlan& plan, int fold) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    if (plan.assignments[i] != fold) rows.push_back(i);
  }
  return rows;
}

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;  // 0 for (near-)constant columns

  static Standardizer fit(const std::vector<std::vector<double>>& columns,
                          const std::vector<std::size_t>& rows) {
    Standardizer s;
    s.mean.resize(columns.size());
    s.inv_std.resize(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      double m = 0.0;
      for (std::size_t r : rows) m += columns[c][r];
      m /= static_cast<double>(rows.size());
      double var = 0.0;
      for (std::size_t r : rows) {
        const double d = columns[c][r] - m;
        var += d * d;
      }
      var /= static_cast<double>(rows.size());
      s.mean[c] = m;
      s.inv_std[c] = var < 1e-24 ? 0.0 : 1.0 / std::sqrt(var);
    }
    return s;
  }

  double at(const std::vector<std::vector<double>>& columns, std::size_t c,
            std::size_t r) const {
    return (columns[c][r] - mean[c]) * inv_std[c];
  }
};

// Symmetric positive definite solve via Cholesky; a is row-major d x d.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                   std::size_t d) {
  std::vector<double> l(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (s <= 0.0) {
          throw Error(ErrorCode::NonFiniteGradient,
                      "normal equations are not positive definite");
        }
        l[i * d + i] = std::sqrt(s);
      } else {
        l[i * d + j] = s / l[j * d + j];
      }
    }
  }
  // forward then backward substitution
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * y[k];
    y[i] = s / l[i * d + i];
  }
  std::vector<double> x(d);
  for (std::size_t ii = d; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < d; ++k) s -= l[k * d + ii] * x[k];
    x[ii] = s / l[ii * d + ii];
  }
  return x;
}

int distinct_classes(const std::vector<double>& target,
                     const std::vector<std::size_t>& rows, int n_classes) {
  std::vector<bool> seen(n_classes, false);
  int count = 0;
  for (std::size_t r : rows) {
    const int c = static_cast<int>(target[r]);
    if (!seen[c]) {
      seen[c] = true;
      ++count;
    }
  }
  return count;
}

}  // namespace

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest: return "rf";
    case ModelKind::KNearest: return "knn";
    case ModelKind::Linear: return "linear";
  }
  return "rf";
}

std::optional<ModelKind> model_from_name(std::string_view name) {
  if (name == "rf") return ModelKind::RandomForest;
  if (name == "knn") return ModelKind::KNearest;
  if (name == "linear") return ModelKind::Linear;
  return std::nullopt;
}

nlohmann::json ScoreReport::to_json() const {
  nlohmann::json j;
  j["primary"] = primary;
  j["secondary"] = secondary;
  j["model"] = std::string(model_name(model));
  auto& folds = j["per_fold"] = nlohmann::json::array();
  for (double v : per_fold) {
    if (std::isnan(v)) {
      folds.push_back(nullptr);
    } else {
      folds.push_back(v);
    }
  }
  auto& skipped = j["fold_skipped"] = nlohmann::json::array();
  for (bool b : fold_skipped) skipped.push_back(b);
  return j;
}

ScoreReport ScoreReport::from_json(const nlohmann::json& j) {
  ScoreReport r;
  r.primary = j.at("primary").get<double>();
  r.secondary = j.at("secondary").get<double>();
  const auto kind = model_from_name(j.at("model").get<std::string>());
  if (!kind) {
    throw Error(ErrorCode::ParseError, "unknown model kind in score report");
  }
  r.model = *kind;
  for (const auto& v : j.at("per_fold")) {
    r.per_fold.push_back(v.is_null() ? kNaN : v.get<double>());
  }
  for (const auto& b : j.at("fold_skipped")) r.fold_skipped.push_back(b.get<bool>());
  return r;
}

Metrics metrics(const std::vector<double>& predictions,
                const std::vector<double>& truth, data::Task task, int n_classes) {
  if (predictions.size() != truth.size() || truth.empty()) {
    throw Error(ErrorCode::LengthMismatch, "prediction/truth length mismatch");
  }
  Metrics m;
  const double n = static_cast<double>(truth.size());

  if (task == data::Task::Classification) {
    std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
    double correct = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const int t = static_cast<int>(truth[i]);
      const int p = static_cast<int>(predictions[i]);
      if (t == p) {
        ++correct;
        ++tp[t];
      } else {
        ++fp[p];
        ++fn[t];
      }
    }
    double f1_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
      const double prec = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
      const double rec = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
      f1_sum += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    m.primary = f1_sum / static_cast<double>(n_classes);
    m.secondary = correct / n;
    return m;
  }

  double sse = 0.0;
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= n;
  double sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - predictions[i];
    sse += e * e;
    const double d = truth[i] - mean;
    sst += d * d;
  }
  m.primary = 1.0 - sse / n;
  m.secondary = sst < 1e-30 ? (sse < 1e-30 ? 1.0 : 0.0) : 1.0 - sse / sst;
  return m;
}

RandomForest RandomForest::train(const std::vector<std::vector<double>>& columns,
                                 const std::vector<double>& target,
                                 const std::vector<std::size_t>& train_rows,
                                 data::Task task, int n_classes,
                                 const ForestConfig& config) {
  const std::size_t d = columns.size();
  const std::size_t n = train_rows.size();
  if (d == 0 || n == 0) {
    throw Error(ErrorCode::NoLiveFeatures, "forest training needs rows and columns");
  }
  const bool classify = task == data::Task::Classification;
  const int n_cls = classify ? n_classes : 1;

  RandomForest forest;
  forest.task_ = task;
  forest.n_classes_ = n_cls;
  forest.importance_.assign(d, 0.0);

  // Histogram bins per feature from the training rows: at most n_bins bins,
  // boundaries at value midpoints so thresholds never split ties.
  std::vector<std::vector<double>> edges(d);
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> vals;
    vals.reserve(n);
    for (std::size_t r : train_rows) vals.push_back(columns[c][r]);
    std::sort(vals.begin(), vals.end());
    std::vector<double> uniq(vals);
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    auto& e = edges[c];
    if (uniq.size() <= 1) continue;
    if (uniq.size() <= static_cast<std::size_t>(config.n_bins)) {
      for (std::size_t i = 0; i + 1 < uniq.size(); ++i) {
        e.push_back(uniq[i] / 2.0 + uniq[i + 1] / 2.0);
      }
    } else {
      for (int i = 1; i < config.n_bins; ++i) {
        const double v = vals[static_cast<std::size_t>(i) * vals.size() /
                              static_cast<std::size_t>(config.n_bins)];
        const auto it = std::upper_bound(uniq.begin(), uniq.end(), v);
        if (it == uniq.end()) continue;
        e.push_back(v / 2.0 + *it / 2.0);
      }
      e.erase(std::unique(e.begin(), e.end()), e.end());
    }
  }

  // binned training matrix, local row indexing
  std::vector<std::vector<std::uint8_t>> bins(d, std::vector<std::uint8_t>(n));
  for (std::size_t c = 0; c < d; ++c) {
    const auto& e = edges[c];
    for (std::size_t i = 0; i < n; ++i) {
      const double x = columns[c][train_rows[i]];
      bins[c][i] = static_cast<std::uint8_t>(
          std::upper_bound(e.begin(), e.end(), x) - e.begin());
    }
  }

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = target[train_rows[i]];

  const std::size_t mtry =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

  struct Grower {
    const std::vector<std::vector<std::uint8_t>>& bins;
    const std::vector<std::vector<double>>& edges;
    const std::vector<double>& y;
    bool classify;
    int n_cls;
    std::size_t mtry;
    const ForestConfig& cfg;
    Rng& rng;
    Tree& tree;
    std::vector<double>& importance;
    std::vector<double> hist;  // scratch: bin x class counts or (cnt,sum,sumsq)

    int grow(std::vector<std::uint32_t>& rows, int depth) {
      const double n_node = static_cast<double>(rows.size());

      // node aggregate and weighted impurity (n * gini, or n * variance)
      std::vector<double> counts;
      double sum = 0.0, sumsq = 0.0, weighted_imp = 0.0;
      if (classify) {
        counts.assign(n_cls, 0.0);
        for (std::uint32_t r : rows) counts[static_cast<int>(y[r])] += 1.0;
        double sq = 0.0;
        for (double c : counts) sq += c * c;
        weighted_imp = n_node - sq / n_node;
      } else {
        for (std::uint32_t r : rows) {
          sum += y[r];
          sumsq += y[r] * y[r];
        }
        weighted_imp = sumsq - sum * sum / n_node;
      }

      const auto leaf_value = [&]() -> double {
        if (!classify) return sum / n_node;
        int best = 0;
        for (int c = 1; c < n_cls; ++c) {
          if (counts[c] > counts[best]) best = c;
        }
        return static_cast<double>(best);
      };

      const int me = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});

      if (depth >= cfg.max_depth ||
          rows.size() < static_cast<std::size_t>(cfg.min_samples_split) ||
          weighted_imp < 1e-12) {
        tree.nodes[me].value = leaf_value();
        return me;
      }

      // best split over a fresh feature subsample
      int best_feature = -1, best_bin = -1;
      double best_gain = 1e-12;
      for (std::size_t pick : rng.sample_indices(bins.size(), mtry)) {
        const auto& e = edges[pick];
        if (e.empty()) continue;
        const std::size_t n_bins = e.size() + 1;
        const std::size_t w = classify ? n_cls : 3;
        hist.assign(n_bins * w, 0.0);
        const auto& fb = bins[pick];
        if (classify) {
          for (std::uint32_t r : rows) {
            hist[fb[r] * w + static_cast<int>(y[r])] += 1.0;
          }
        } else {
          for (std::uint32_t r : rows) {
            double* h = &hist[fb[r] * w];
            h[0] += 1.0;
            h[1] += y[r];
            h[2] += y[r] * y[r];
          }
        }
        // prefix scan over bin boundaries
        double ln = 0.0, lsum = 0.0, lsumsq = 0.0, lsq = 0.0;
        std::vector<double> lcounts(classify ? n_cls : 0, 0.0);
        for (std::size_t b = 0; b + 1 < n_bins; ++b) {
          double gain;
          if (classify) {
            for (int c = 0; c < n_cls; ++c) {
              const double prev = lcounts[c];
              lcounts[c] += hist[b * w + c];
              lsq += lcounts[c] * lcounts[c] - prev * prev;
              ln += hist[b * w + c];
            }
            if (ln == 0.0 || ln == n_node) continue;
            const double rn = n_node - ln;
            double rsq = 0.0;
            for (int c = 0; c < n_cls; ++c) {
              const double rc = counts[c] - lcounts[c];
              rsq += rc * rc;
            }
            gain = weighted_imp - (ln - lsq / ln) - (rn - rsq / rn);
          } else {
            const double* h = &hist[b * w];
            ln += h[0];
            lsum += h[1];
            lsumsq += h[2];
            if (ln == 0.0 || ln == n_node) continue;
            const double rn = n_node - ln;
            const double rsum = sum - lsum;
            const double rsumsq = sumsq - lsumsq;
            gain = weighted_imp - (lsumsq - lsum * lsum / ln) -
                   (rsumsq - rsum * rsum / rn);
          }
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(pick);
            best_bin = static_cast<int>(b);
          }
        }
      }

      if (best_feature < 0) {
        tree.nodes[me].value = leaf_value();
        return me;
      }

      std::vector<std::uint32_t> left, right;
      const auto& fb = bins[best_feature];
      for (std::uint32_t r : rows) {
        (fb[r] <= best_bin ? left : right).push_back(r);
      }
      rows.clear();
      rows.shrink_to_fit();

      importance[best_feature] += best_gain;
      tree.nodes[me].feature = best_feature;
      tree.nodes[me].threshold = edges[best_feature][best_bin];
      tree.nodes[me].left = grow(left, depth + 1);
      tree.nodes[me].right = grow(right, depth + 1);
      return me;
    }
  };

  forest.trees_.resize(config.n_trees);
  for (int t = 0; t < config.n_trees; ++t) {
    Rng rng(seed_mix(config.seed, 0x7EE50000ULL + static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> sample(n);
    for (auto& r : sample) r = static_cast<std::uint32_t>(rng.index(n));
    Grower grower{bins, edges,  y,   classify, n_cls, mtry, config, rng,
                  forest.trees_[t], forest.importance_, {}};
    grower.grow(sample, 0);
  }

  const double total =
      std::accumulate(forest.importance_.begin(), forest.importance_.end(), 0.0);
  if (total > 0.0) {
    for (double& v : forest.importance_) v /= total;
  }

  // prediction thresholds compare raw values, so map local bins back: done
  // already via edge thresholds.
  return forest;
}

double RandomForest::predict_tree(const Tree& t,
                                  const std::vector<std::vector<double>>& columns,
                                  std::size_t row) const {
  int node = 0;
  while (t.nodes[node].feature >= 0) {
    const auto& nd = t.nodes[node];
    node = columns[nd.feature][row] <= nd.threshold ? nd.left : nd.right;
  }
  return t.nodes[node].value;
}

double RandomForest::predict_row(const std::vector<std::vector<double>>& columns,
                                 std::size_t row) const {
  if (task_ == data::Task::Classification) {
    std::vector<int> votes(n_classes_, 0);
    for (const auto& t : trees_) {
      ++votes[static_cast<int>(predict_tree(t, columns, row))];
    }
    int best = 0;
    for (int c = 1; c < n_classes_; ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    return static_cast<double>(best);
  }
  double sum = 0.0;
  for (const auto& t : trees_) sum += predict_tree(t, columns, row);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict(const std::vector<std::vector<double>>& columns,
                                          const std::vector<std::size_t>& rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(predict_row(columns, r));
  return out;
}

std::vector<double> knn_predict(const std::vector<std::vector<double>>& columns,
                                const std::vector<double>& target,
                                const std::vector<std::size_t>& train_rows,
                                const std::vector<std::size_t>& eval_rows,
                                data::Task task, int n_classes, int k) {
  const auto z = Standardizer::fit(columns, train_rows);
  const std::size_t kk = std::min<std::size_t>(k, train_rows.size());

  std::vector<double> out;
  out.reserve(eval_rows.size());
  std::vector<std::pair<double, std::size_t>> dist(train_rows.size());
  for (std::size_t er : eval_rows) {
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        const double diff = z.at(columns, c, er) - z.at(columns, c, train_rows[i]);
        d2 += diff * diff;
      }
      dist[i] = {d2, i};  // index tiebreak keeps ordering deterministic
    }
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    if (task == data::Task::Classification) {
      std::vector<int> votes(n_classes, 0);
      for (std::size_t i = 0; i < kk; ++i) {
        ++votes[static_cast<int>(target[train_rows[dist[i].second]])];
      }
      int best = 0;
      for (int c = 1; c < n_classes; ++c) {
        if (votes[c] > votes[best]) best = c;
      }
      out.push_back(static_cast<double>(best));
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < kk; ++i) sum += target[train_rows[dist[i].second]];
      out.push_back(sum / static_cast<double>(kk));
    }
  }
  return out;
}

std::vector<double> linear_predict(const std::vector<std::vector<double>>& columns,
                                   const std::vector<double>& target,
                                   const std::vector<std::size_t>& train_rows,
                                   const std::vector<std::size_t>& eval_rows,
                                   data::Task task, int n_classes) {
  const std::size_t d = columns.size();
  const std::size_t n = train_rows.size();
  const auto z = Standardizer::fit(columns, train_rows);

  if (task == data::Task::Regression) {
    // ridge on z-scored features; the target arrives train-centered, so no
    // intercept term is needed
    const double lambda = 1.0;
    std::vector<double> g(d * d, 0.0), rhs(d, 0.0);
    for (std::size_t r : train_rows) {
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = z.at(columns, i, r);
        rhs[i] += xi * target[r];
        for (std::size_t j = 0; j <= i; ++j) {
          g[i * d + j] += xi * z.at(columns, j, r);
        }
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) g[i * d + j] = g[j * d + i];
      g[i * d + i] += lambda;
    }
    const auto w = cholesky_solve(std::move(g), std::move(rhs), d);
    std::vector<double> out;
    out.reserve(eval_rows.size());
    for (std::size_t r : eval_rows) {
      double p = 0.0;
      for (std::size_t i = 0; i < d; ++i) p += w[i] * z.at(columns, i, r);
      out.push_back(p);
    }
    return out;
  }

  // multinomial logistic regression, full-batch gradient descent from zero
  const int kcls = n_classes;
  const int iters = 400;
  const double l2 = 1e-3;
  const double lr = std::min(1.0, 8.0 / static_cast<double>(d + 4));
  std::vector<double> w((d + 1) * kcls, 0.0);  // bias row at index d
  std::vector<double> grad(w.size());
  std::vector<double> logits(kcls);

  for (int it = 0; it < iters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r : train_rows) {
      for (int c = 0; c < kcls; ++c) logits[c] = w[d * kcls + c];
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = z.at(columns, i, r);
        for (int c = 0; c < kcls; ++c) logits[c] += w[i * kcls + c] * xi;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double zsum = 0.0;
      for (int c = 0; c < kcls; ++c) {
        logits[c] = std::exp(logits[c] - mx);
        zsum += logits[c];
      }
      const int truth = static_cast<int>(target[r]);
      for (int c = 0; c < kcls; ++c) {
        const double delta = logits[c] / zsum - (c == truth ? 1.0 : 0.0);
        for (std::size_t i = 0; i < d; ++i) {
          grad[i * kcls + c] += delta * z.at(columns, i, r);
        }
        grad[d * kcls + c] += delta;
      }
    }
    const double scale = lr / static_cast<double>(n);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= scale * grad[i] + lr * l2 * (i < d * kcls ? w[i] : 0.0);
    }
  }

  std::vector<double> out;
  out.reserve(eval_rows.size());
  for (std::size_t r : eval_rows) {
    for (int c = 0; c < kcls; ++c) logits[c] = w[d * kcls + c];
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = z.at(columns, i, r);
      for (int c = 0; c < kcls; ++c) logits[c] += w[i * kcls + c] * xi;
    }
    int best = 0;
    for (int c = 1; c < kcls; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    out.push_back(static_cast<double>(best));
  }
  return out;
}

Evaluator::Evaluator(const data::Frame& frame, ModelKind kind, int folds,
                     std::uint64_t seed)
    : frame_(frame), kind_(kind), seed_(seed), plan_(data::kfolds(frame, folds, seed)) {}

ScoreReport Evaluator::score(const pipeline::FeatureSet& fs) {
  const std::string key = fs.set_key() + "#" + std::string(model_name(kind_)) + "#" +
                          std::to_string(seed_) + "#" + std::to_string(plan_.k);
  if (const auto it = cache_.find(key); it != cache_.end()) {
    ++cache_hits_;
    return it->second;
  }
  const auto matrix = pipeline::materialize(fs, frame_);
  auto report = score_matrix(matrix);
  ++evaluations_;
  cache_.emplace(key, report);
  return report;
}

ScoreReport Evaluator::score_matrix(const data::FeatureMatrix& m) const {
  const auto started = std::chrono::steady_clock::now();
  if (m.n_cols() == 0) {
    throw Error(ErrorCode::NoLiveFeatures, "no live features to evaluate");
  }
  const bool classify = frame_.task() == data::Task::Classification;
  const int n_classes = classify ? frame_.n_classes() : 0;

  ScoreReport report;
  report.model = kind_;
  report.per_fold.assign(plan_.k, kNaN);
  report.fold_skipped.assign(plan_.k, false);

  std::vector<double> importance_sum(m.n_cols(), 0.0);
  double primary_sum = 0.0, secondary_sum = 0.0;
  int used = 0;

  for (int fold = 0; fold < plan_.k; ++fold) {
    const auto train_rows = complement_rows(plan_, fold);
    const auto val_rows = plan_.fold_rows(fold);

    std::vector<double> y = frame_.target();
    if (classify) {
      if (distinct_classes(y, train_rows, n_classes) < 2) {
        report.fold_skipped[fold] = true;
        continue;
      }
    } else {
      // standardize the target on training-row statistics
      double mean = 0.0;
      for (std::size_t r : train_rows) mean += y[r];
      mean /= static_cast<double>(train_rows.size());
      double var = 0.0;
      for (std::size_t r : train_rows) var += (y[r] - mean) * (y[r] - mean);
      var /= static_cast<double>(train_rows.size());
      if (var < 1e-24) {
        report.fold_skipped[fold] = true;
        continue;
      }
      const double inv = 1.0 / std::sqrt(var);
      for (double& v : y) v = (v - mean) * inv;
    }

    std::vector<double> pred;
    switch (kind_) {
      case ModelKind::RandomForest: {
        ForestConfig cfg;
        cfg.seed = seed_mix(seed_, 0xF07D0000ULL + static_cast<std::uint64_t>(fold));
        const auto forest = RandomForest::train(m.cols, y, train_rows, frame_.task(),
                                                n_classes, cfg);
        pred = forest.predict(m.cols, val_rows);
        for (std::size_t c = 0; c < m.n_cols(); ++c) {
          importance_sum[c] += forest.importance()[c];
        }
        break;
      }
      case ModelKind::KNearest:
        pred = knn_predict(m.cols, y, train_rows, val_rows, frame_.task(), n_classes);
        break;
      case ModelKind::Linear:
        pred = linear_predict(m.cols, y, train_rows, val_rows, frame_.task(), n_classes);
        break;
    }

    std::vector<double> truth;
    truth.reserve(val_rows.size());
    for (std::size_t r : val_rows) truth.push_back(y[r]);
    const Metrics met = metrics(pred, truth, frame_.task(), n_classes);
    report.per_fold[fold] = met.primary;
    primary_sum += met.primary;
    secondary_sum += met.secondary;
    ++used;
  }

  if (used == 0) {
    throw Error(ErrorCode::DegenerateFold, "every fold was degenerate");
  }
  report.primary = primary_sum / used;
  report.secondary = secondary_sum / used;

  if (kind_ == ModelKind::RandomForest) {
    const double total =
        std::accumulate(importance_sum.begin(), importance_sum.end(), 0.0);
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
      report.importance[m.names[c]] = total > 0.0 ? importance_sum[c] / total : 0.0;
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace featforge::eval
