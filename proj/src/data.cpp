#include "featforge/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "featforge/errors.hpp"
#include "featforge/rng.hpp"

namespace featforge::data {

namespace {

std::string trimmed(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_real(const std::string& cell, double& out) {
  const std::string t = trimmed(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

// One CSV record, quote-aware. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  // A lone trailing newline yields one empty field; treat as end of input.
  if (fields.size() == 1 && fields[0].empty() && in.peek() == EOF && ch == EOF) return false;
  return true;
}

bool valid_feature_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '"') return false;
  }
  return !expr::is_operator_spelling(name);
}

}  // namespace

std::string_view task_name(Task t) {
  return t == Task::Classification ? "classification" : "regression";
}

Frame Frame::from_columns(std::vector<std::string> names,
                          std::vector<std::vector<double>> columns,
                          std::vector<double> target, Task task,
                          std::string target_name,
                          std::vector<std::string> class_labels) {
  if (names.size() != columns.size()) {
    throw Error(ErrorCode::ParseError, "column name/data count mismatch");
  }
  const std::size_t n = target.size();
  if (n < 10) {
    throw Error(ErrorCode::TooFewRows,
                "frame has " + std::to_string(n) + " rows, need at least 10");
  }
  Frame f;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!valid_feature_name(names[i])) {
      throw Error(ErrorCode::ParseError,
                  "invalid feature column name '" + names[i] + "'");
    }
    if (columns[i].size() != n) {
      throw Error(ErrorCode::LengthMismatch,
                  "column '" + names[i] + "' length differs from target");
    }
    for (double x : columns[i]) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::ParseError,
                    "non-finite value in column '" + names[i] + "'");
      }
    }
    if (f.columns_.count(names[i]) != 0) {
      throw Error(ErrorCode::ParseError, "duplicate column name '" + names[i] + "'");
    }
    f.columns_.emplace(names[i], std::move(columns[i]));
  }
  if (task == Task::Classification) {
    if (class_labels.size() < 2) {
      throw Error(ErrorCode::ParseError,
                  "classification target has fewer than 2 classes");
    }
    for (double y : target) {
      const double r = std::round(y);
      if (y != r || r < 0 || r >= static_cast<double>(class_labels.size())) {
        throw Error(ErrorCode::ParseError, "classification target not integer-coded");
      }
    }
  }
  f.names_ = std::move(names);
  f.target_ = std::move(target);
  f.task_ = task;
  f.target_name_ = std::move(target_name);
  f.class_labels_ = std::move(class_labels);
  f.n_ = n;
  return f;
}

bool Frame::has_column(const std::string& name) const {
  return columns_.count(name) != 0;
}

const std::vector<double>& Frame::column(const std::string& name) const {
  auto it = columns_.find(name);
  if (it == columns_.end()) {
    throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found");
  }
  return it->second;
}

expr::ColumnLookup Frame::lookup() const {
  return [this](const std::string& name) -> const std::vector<double>* {
    auto it = columns_.find(name);
    return it == columns_.end() ? nullptr : &it->second;
  };
}

Frame load_csv(const std::string& path, const std::string& target, Task task) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  }
  std::vector<std::string> header;
  if (!read_record(in, header) || header.empty()) {
    throw Error(ErrorCode::ParseError, "missing header row in '" + path + "'");
  }
  for (auto& h : header) h = trimmed(h);

  // Target by exact name first, then by 0-based index.
  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == target) target_idx = i;
  }
  if (target_idx == header.size()) {
    int idx = -1;
    const auto [p, ec] =
        std::from_chars(target.data(), target.data() + target.size(), idx);
    if (ec == std::errc{} && p == target.data() + target.size() && idx >= 0 &&
        idx < static_cast<int>(header.size())) {
      target_idx = static_cast<std::size_t>(idx);
    } else {
      throw Error(ErrorCode::TargetNotFound,
                  "target column '" + target + "' not found in '" + path + "'");
    }
  }

  std::vector<std::string> names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i != target_idx) names.push_back(header[i]);
  }
  std::vector<std::vector<double>> columns(names.size());
  std::vector<double> y;
  std::vector<std::string> class_labels;
  std::map<std::string, int> label_codes;

  std::vector<std::string> fields;
  std::size_t row = 1;  // header was row 1
  while (read_record(in, fields)) {
    ++row;
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    std::size_t out_col = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == target_idx) {
        if (task == Task::Classification) {
          const std::string label = trimmed(fields[i]);
          if (label.empty()) {
            throw Error(ErrorCode::ParseError,
                        "row " + std::to_string(row) + ", col " + std::to_string(i + 1) +
                            ": empty target label");
          }
          auto [it, inserted] =
              label_codes.emplace(label, static_cast<int>(class_labels.size()));
          if (inserted) class_labels.push_back(label);
          y.push_back(static_cast<double>(it->second));
        } else {
          double v;
          if (!parse_real(fields[i], v)) {
            throw Error(ErrorCode::ParseError,
                        "row " + std::to_string(row) + ", col " + std::to_string(i + 1) +
                            ": cannot parse '" + fields[i] + "' as a real");
          }
          y.push_back(v);
        }
      } else {
        double v;
        if (!parse_real(fields[i], v)) {
          throw Error(ErrorCode::ParseError,
                      "row " + std::to_string(row) + ", col " + std::to_string(i + 1) +
                          ": cannot parse '" + fields[i] + "' as a real");
        }
        columns[out_col++].push_back(v);
      }
    }
  }
  if (y.size() < 10) {
    throw Error(ErrorCode::TooFewRows,
                "'" + path + "' has " + std::to_string(y.size()) + " data rows, need at least 10");
  }
  return Frame::from_columns(std::move(names), std::move(columns), std::move(y), task,
                             header[target_idx], std::move(class_labels));
}

ColumnStats column_stats(const std::vector<double>& v) {
  ColumnStats s;
  if (v.empty()) return s;
  // Welford running moments; population denominator.
  double mean = 0.0;
  double m2 = 0.0;
  double lo = v[0];
  double hi = v[0];
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (v[i] - mean);
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  s.mean = mean;
  s.std = std::sqrt(std::max(0.0, m2 / static_cast<double>(v.size())));
  s.min = lo;
  s.max = hi;
  return s;
}

std::map<std::string, ColumnStats> stats(const Frame& frame) {
  std::map<std::string, ColumnStats> out;
  for (const auto& name : frame.feature_names()) {
    out.emplace(name, column_stats(frame.column(name)));
  }
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
  }
  const ColumnStats sa = column_stats(a);
  const ColumnStats sb = column_stats(b);
  if (sa.std < 1e-12 || sb.std < 1e-12) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - sa.mean) * (b[i] - sb.mean);
  }
  cov /= static_cast<double>(a.size());
  const double r = cov / (sa.std * sb.std);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<std::size_t> FoldPlan::fold_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan kfolds(const Frame& frame, int k, std::uint64_t seed) {
  const std::size_t n = frame.n_rows();
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::KTooLarge,
                "fold count " + std::to_string(k) + " invalid for " + std::to_string(n) + " rows");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  Rng rng(seed_mix(seed, 0xF01D5));

  if (frame.task() == Task::Classification) {
    // Per-class round-robin dealing; the rolling start offset balances fold
    // sizes across classes.
    const int n_classes = frame.n_classes();
    int start = 0;
    for (int c = 0; c < n_classes; ++c) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(frame.target()[i]) == c) rows.push_back(i);
      }
      rng.shuffle(rows);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        plan.assignments[rows[i]] = static_cast<int>((i + start) % k);
      }
      start = static_cast<int>((start + rows.size()) % k);
    }
  } else {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    rng.shuffle(rows);
    for (std::size_t i = 0; i < n; ++i) {
      plan.assignments[rows[i]] = static_cast<int>(i % k);
    }
  }

  std::vector<int> counts(k, 0);
  for (int f : plan.assignments) ++counts[f];
  for (int f = 0; f < k; ++f) {
    if (counts[f] == 0) {
      throw Error(ErrorCode::KTooLarge, "fold " + std::to_string(f) + " is empty");
    }
  }
  return plan;
}

FeatureMatrix materialize(const Frame& frame,
                          const std::vector<expr::FeatureExpr>& exprs,
                          const std::vector<bool>& mask, std::size_t min_features) {
  const std::size_t n_base = frame.feature_names().size();
  if (mask.size() != n_base + exprs.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "mask covers " + std::to_string(mask.size()) + " features, expected " +
                    std::to_string(n_base + exprs.size()));
  }
  std::size_t live = 0;
  for (bool b : mask) live += b ? 1 : 0;
  if (live < min_features) {
    throw Error(ErrorCode::EmptySelection,
                "selection keeps " + std::to_string(live) + " features, floor is " +
                    std::to_string(min_features));
  }
  FeatureMatrix m;
  m.rows = frame.n_rows();
  for (std::size_t i = 0; i < n_base; ++i) {
    if (!mask[i]) continue;
    m.names.push_back(frame.feature_names()[i]);
    m.cols.push_back(frame.column(frame.feature_names()[i]));
  }
  const auto lookup = frame.lookup();
  for (std::size_t j = 0; j < exprs.size(); ++j) {
    if (!mask[n_base + j]) continue;
    m.names.push_back(exprs[j].name());
    m.cols.push_back(expr::evaluate(exprs[j], lookup, m.rows));
    for (double x : m.cols.back()) {
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::NonFiniteColumn,
                    "derived column '" + exprs[j].name() + "' is non-finite");
      }
    }
  }
  return m;
}

}  // namespace featforge::data
