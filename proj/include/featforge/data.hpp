#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "featforge/expr.hpp"

namespace featforge::data {

enum class Task { Classification, Regression };

std::string_view task_name(Task t);

// Immutable tabular dataset: numeric feature columns plus a separated target.
// Classification targets are integer-coded class labels (codes assigned in
// first-appearance order); the original label strings are retained so exports
// reproduce the input coding exactly.
class Frame {
 public:
  static Frame from_columns(std::vector<std::string> names,
                            std::vector<std::vector<double>> columns,
                            std::vector<double> target, Task task,
                            std::string target_name = "target",
                            std::vector<std::string> class_labels = {});

  std::size_t n_rows() const { return n_; }
  Task task() const { return task_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::string& target_name() const { return target_name_; }
  const std::vector<double>& target() const { return target_; }
  const std::vector<std::string>& class_labels() const { return class_labels_; }
  int n_classes() const { return static_cast<int>(class_labels_.size()); }

  bool has_column(const std::string& name) const;
  const std::vector<double>& column(const std::string& name) const;

  // Adapter for expr::evaluate.
  expr::ColumnLookup lookup() const;

 private:
  Frame() = default;

  std::vector<std::string> names_;
  std::map<std::string, std::vector<double>> columns_;
  std::vector<double> target_;
  std::vector<std::string> class_labels_;
  std::string target_name_;
  Task task_ = Task::Regression;
  std::size_t n_ = 0;
};

// RFC-4180-style CSV loader: header row required, UTF-8, '.' decimal
// separator, quoted fields supported. `target` selects the target column by
// exact header name, falling back to a 0-based column index when the string
// is an integer. Feature cells must parse as reals; classification target
// cells may be arbitrary label strings. Missing values are rejected.
//
// Feature column names must be usable as expression tokens: non-empty, free
// of whitespace and commas, distinct, and not an operator spelling.
Frame load_csv(const std::string& path, const std::string& target, Task task);

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;  // population denominator n
  double min = 0.0;
  double max = 0.0;
};

ColumnStats column_stats(const std::vector<double>& v);

// Per-feature descriptive statistics for all feature columns.
std::map<std::string, ColumnStats> stats(const Frame& frame);

// Pearson correlation; 0 when either side is (near-)constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // row -> fold index
  std::uint64_t seed = 0;

  std::vector<std::size_t> fold_rows(int fold) const;
};

// Deterministic k-fold split; stratified by class for classification frames
// (per-class counts differ by at most 1 across folds).
FoldPlan kfolds(const Frame& frame, int k, std::uint64_t seed);

struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;  // each of length rows
  std::size_t rows = 0;

  std::size_t n_cols() const { return cols.size(); }
};

// Materializes the live columns: surviving base columns first (schema order),
// then surviving derived columns (insertion order). `mask` covers base
// features followed by derived expressions.
FeatureMatrix materialize(const Frame& frame,
                          const std::vector<expr::FeatureExpr>& exprs,
                          const std::vector<bool>& mask,
                          std::size_t min_features = 1);

}  // namespace featforge::data
