#include "featforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "featforge/errors.hpp"

namespace featforge::pipeline {

FeatureSet FeatureSet::from_frame(const data::Frame& frame, SetLimits limits) {
  FeatureSet fs;
  fs.base_ = frame.feature_names();
  fs.mask_.assign(fs.base_.size(), true);
  if (limits.max_live == 0) limits.max_live = 4 * fs.base_.size();
  fs.limits_ = limits;
  if (fs.base_.size() < limits.min_features) {
    throw Error(ErrorCode::EmptySelection,
                "frame has " + std::to_string(fs.base_.size()) +
                    " features, floor is " + std::to_string(limits.min_features));
  }
  return fs;
}

std::size_t FeatureSet::live_count() const {
  std::size_t n = 0;
  for (bool b : mask_) n += b ? 1 : 0;
  return n;
}

std::size_t FeatureSet::live_derived_count() const {
  std::size_t n = 0;
  for (std::size_t i = base_.size(); i < mask_.size(); ++i) n += mask_[i] ? 1 : 0;
  return n;
}

std::vector<std::string> FeatureSet::live_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (mask_[i]) out.push_back(base_[i]);
  }
  for (std::size_t j = 0; j < derived_.size(); ++j) {
    if (mask_[base_.size() + j]) out.push_back(derived_[j].name());
  }
  return out;
}

std::string FeatureSet::live_key_of(const std::string& name) const {
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (mask_[i] && base_[i] == name) return name;
  }
  for (std::size_t j = 0; j < derived_.size(); ++j) {
    if (mask_[base_.size() + j] && derived_[j].name() == name) {
      return derived_[j].canonical_key();
    }
  }
  return {};
}

bool FeatureSet::has_live_key(const std::string& canonical) const {
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (mask_[i] && base_[i] == canonical) return true;
  }
  for (std::size_t j = 0; j < derived_.size(); ++j) {
    if (mask_[base_.size() + j] && derived_[j].canonical_key() == canonical) return true;
  }
  return false;
}

std::string FeatureSet::set_key() const {
  std::string out;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (!mask_[i]) continue;
    if (!out.empty()) out += '|';
    out += base_[i];
  }
  for (std::size_t j = 0; j < derived_.size(); ++j) {
    if (!mask_[base_.size() + j]) continue;
    if (!out.empty()) out += '|';
    out += derived_[j].canonical_key();
  }
  return out;
}

std::string FeatureSet::token_sequence() const {
  std::string out;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (!mask_[i]) continue;
    if (!out.empty()) out += ", ";
    out += base_[i];
  }
  for (std::size_t j = 0; j < derived_.size(); ++j) {
    if (!mask_[base_.size() + j]) continue;
    if (!out.empty()) out += ", ";
    out += expr::render_postfix(derived_[j]);
  }
  return out;
}

nlohmann::json FeatureSet::to_json() const {
  nlohmann::json j;
  j["base"] = base_;
  auto& derived = j["derived"] = nlohmann::json::array();
  for (const auto& e : derived_) derived.push_back(expr::render_postfix(e));
  auto& mask = j["mask"] = nlohmann::json::array();
  for (bool b : mask_) mask.push_back(b ? 1 : 0);
  return j;
}

FeatureSet FeatureSet::from_json(const nlohmann::json& j, SetLimits limits) {
  FeatureSet fs;
  fs.base_ = j.at("base").get<std::vector<std::string>>();
  for (const auto& text : j.at("derived")) {
    auto parsed = expr::parse_postfix(text.get<std::string>(), fs.base_, limits.expr);
    if (parsed.size() != 1) {
      throw Error(ErrorCode::MalformedExpression,
                  "derived entry holds more than one expression");
    }
    fs.derived_.push_back(std::move(parsed.front()));
  }
  for (const auto& bit : j.at("mask")) fs.mask_.push_back(bit.get<int>() != 0);
  if (fs.mask_.size() != fs.base_.size() + fs.derived_.size()) {
    throw Error(ErrorCode::LengthMismatch, "mask length does not cover base+derived");
  }
  if (limits.max_live == 0) limits.max_live = 4 * fs.base_.size();
  fs.limits_ = limits;
  return fs;
}

GenerationOutcome apply_generation(const FeatureSet& fs, const GenerationAction& a,
                                   const data::Frame& frame) {
  if (a.exprs.empty() || a.exprs.size() > 3) {
    throw Error(ErrorCode::NoValidAction,
                "generation action carries " + std::to_string(a.exprs.size()) +
                    " expressions, expected 1 to 3");
  }
  GenerationOutcome out;
  out.set = fs;
  const auto lookup = frame.lookup();
  std::set<std::string> live_keys;
  for (const auto& name : fs.base_names()) live_keys.insert(name);  // bare refs
  for (std::size_t j = 0; j < fs.derived().size(); ++j) {
    if (fs.is_live(fs.base_names().size() + j)) {
      live_keys.insert(fs.derived()[j].canonical_key());
    }
  }

  for (const auto& e : a.exprs) {
    if (live_keys.count(e.canonical_key()) != 0) {
      ++out.rejected_duplicate;
      continue;
    }
    const auto col = expr::evaluate(e, lookup, frame.n_rows());
    const bool finite = std::all_of(col.begin(), col.end(),
                                    [](double x) { return std::isfinite(x); });
    if (!finite) {
      ++out.rejected_nonfinite;
      continue;
    }
    if (data::column_stats(col).std < 1e-10) {
      ++out.rejected_constant;
      continue;
    }
    if (out.set.live_count() >= fs.limits().max_live) {
      ++out.rejected_cap;
      continue;
    }
    out.set.derived_.push_back(e);
    out.set.mask_.push_back(true);
    live_keys.insert(e.canonical_key());
    ++out.accepted;
  }
  return out;
}

SelectionOutcome apply_selection(const FeatureSet& fs, const SelectionAction& a) {
  if (a.drop.empty()) {
    throw Error(ErrorCode::NoValidAction, "selection action carries no drops");
  }

  // name -> live index, validating as we go
  std::vector<std::size_t> indices;
  std::set<std::string> seen;
  for (const auto& name : a.drop) {
    if (!seen.insert(name).second) continue;  // repeated request, keep first
    std::size_t found = fs.size();
    for (std::size_t i = 0; i < fs.base_names().size(); ++i) {
      if (fs.is_live(i) && fs.base_names()[i] == name) found = i;
    }
    for (std::size_t j = 0; j < fs.derived().size(); ++j) {
      const std::size_t idx = fs.base_names().size() + j;
      if (fs.is_live(idx) && fs.derived()[j].name() == name) found = idx;
    }
    if (found == fs.size()) {
      throw Error(ErrorCode::UnknownFeature, "'" + name + "' is not a live feature");
    }
    indices.push_back(found);
  }

  SelectionOutcome out;
  out.set = fs;
  const std::size_t live = fs.live_count();
  const std::size_t floor = fs.limits().min_features;
  const std::size_t allowed = live > floor ? live - floor : 0;
  if (indices.size() > allowed) {
    out.trimmed = static_cast<int>(indices.size() - allowed);
    indices.resize(allowed);
    out.floor_hit = true;
  }
  for (std::size_t idx : indices) {
    out.set.mask_[idx] = false;
    out.dropped.push_back(idx < fs.base_names().size()
                              ? fs.base_names()[idx]
                              : fs.derived()[idx - fs.base_names().size()].name());
  }
  return out;
}

data::FeatureMatrix materialize(const FeatureSet& fs, const data::Frame& frame) {
  return data::materialize(frame, fs.derived(), fs.mask(), fs.limits().min_features);
}

}  // namespace featforge::pipeline
