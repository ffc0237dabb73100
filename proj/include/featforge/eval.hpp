#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "featforge/data.hpp"
#include "featforge/pipeline.hpp"

namespace featforge::eval {

enum class ModelKind { RandomForest, KNearest, Linear };

std::string_view model_name(ModelKind kind);
std::optional<ModelKind> model_from_name(std::string_view name);

// Cross-validated downstream score. primary is macro-F1 (classification) or
// 1-MSE on the per-fold standardized target (regression); secondary is
// accuracy or R^2. Skipped (degenerate) folds hold NaN in the per-fold
// arrays. wall_seconds stays out of the JSON form so traces are reproducible.
struct ScoreReport {
  double primary = 0.0;
  double secondary = 0.0;
  std::vector<double> per_fold;
  std::vector<bool> fold_skipped;
  ModelKind model = ModelKind::RandomForest;
  double wall_seconds = 0.0;
  std::map<std::string, double> importance;  // random forest only

  nlohmann::json to_json() const;
  static ScoreReport from_json(const nlohmann::json& j);
};

struct Metrics {
  double primary = 0.0;
  double secondary = 0.0;
};

// Classification: predictions and truth are class codes; macro-F1 averages
// over all n_classes whether or not a class appears. Regression: 1-MSE and
// R^2 against the mean of the given truth (n_classes ignored).
Metrics metrics(const std::vector<double>& predictions,
                const std::vector<double>& truth, data::Task task, int n_classes);

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 12;
  int min_samples_split = 2;
  int n_bins = 64;
  std::uint64_t seed = 0;
};

// CART-style forest over histogram-binned features: bin edges from the
// training rows, per-split feature subsample of floor(sqrt(d)) (at least 1),
// bootstrap row sampling, gini or variance splitting.
class RandomForest {
 public:
  static RandomForest train(const std::vector<std::vector<double>>& columns,
                            const std::vector<double>& target,
                            const std::vector<std::size_t>& train_rows,
                            data::Task task, int n_classes, const ForestConfig& config);

  double predict_row(const std::vector<std::vector<double>>& columns,
                     std::size_t row) const;
  std::vector<double> predict(const std::vector<std::vector<double>>& columns,
                              const std::vector<std::size_t>& rows) const;

  // Total impurity decrease per feature index, normalized to sum 1 (all
  // zeros when no split was ever made).
  const std::vector<double>& importance() const { return importance_; }

 private:
  struct Node {
    int feature = -1;       // -1: leaf
    double threshold = 0.0;  // go left when value <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;     // class code or mean target
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  double predict_tree(const Tree& t, const std::vector<std::vector<double>>& columns,
                      std::size_t row) const;

  std::vector<Tree> trees_;
  std::vector<double> importance_;
  data::Task task_ = data::Task::Regression;
  int n_classes_ = 0;
};

// k=5 nearest neighbours, Euclidean over features z-scored on training rows.
std::vector<double> knn_predict(const std::vector<std::vector<double>>& columns,
                                const std::vector<double>& target,
                                const std::vector<std::size_t>& train_rows,
                                const std::vector<std::size_t>& eval_rows,
                                data::Task task, int n_classes, int k = 5);

// Linear downstream model on z-scored features: multinomial logistic
// regression by full-batch gradient descent (classification) or ridge with
// lambda = 1 solved by Cholesky (regression).
std::vector<double> linear_predict(const std::vector<std::vector<double>>& columns,
                                   const std::vector<double>& target,
                                   const std::vector<std::size_t>& train_rows,
                                   const std::vector<std::size_t>& eval_rows,
                                   data::Task task, int n_classes);

// Cross-validated evaluation of feature sets against one frame, with a score
// cache keyed by (live-set key, model, seed). Reports returned by score()
// are value copies; the cache only ever grows.
class Evaluator {
 public:
  Evaluator(const data::Frame& frame, ModelKind kind, int folds, std::uint64_t seed);

  ScoreReport score(const pipeline::FeatureSet& fs);
  ScoreReport score_matrix(const data::FeatureMatrix& m) const;

  const data::FoldPlan& folds() const { return plan_; }
  ModelKind model() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t evaluations() const { return evaluations_; }
  std::size_t cache_hits() const { return cache_hits_; }

 private:
  const data::Frame& frame_;
  ModelKind kind_;
  std::uint64_t seed_;
  data::FoldPlan plan_;
  std::map<std::string, ScoreReport> cache_;
  std::size_t evaluations_ = 0;
  std::size_t cache_hits_ = 0;
};

}  // namespace featforge::eval
