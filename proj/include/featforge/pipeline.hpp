#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "featforge/data.hpp"
#include "featforge/expr.hpp"

namespace featforge::pipeline {

class FeatureSet;
struct GenerationAction;
struct SelectionAction;
struct GenerationOutcome;
struct SelectionOutcome;

// Appends the accepted expressions with live bits set. Candidates are
// screened in order: duplicate canonical key among live entries (bare base
// references always count as duplicates), non-finite output on the frame,
// near-constant output (std < 1e-10), then the live-count cap. Screening
// rejects silently; only an empty action throws.
GenerationOutcome apply_generation(const FeatureSet& fs, const GenerationAction& a,
                                   const data::Frame& frame);

// Clears live bits for the dropped names. Unknown or dead names throw
// UnknownFeature; the drop list is trimmed from the back until the floor
// holds, which can leave the set unchanged (floor_hit).
SelectionOutcome apply_selection(const FeatureSet& fs, const SelectionAction& a);

struct SetLimits {
  std::size_t min_features = 2;
  std::size_t max_live = 0;  // 0: resolved to 4 x base count at construction
  expr::ExprLimits expr;
};

// The evolving feature set: the base schema, an append-only list of derived
// expressions, and a liveness mask over base+derived. Dropped entries keep
// their slot (mask 0) so records stay replayable; duplicate detection only
// considers live entries.
class FeatureSet {
 public:
  static FeatureSet from_frame(const data::Frame& frame, SetLimits limits = {});

  const std::vector<std::string>& base_names() const { return base_; }
  const std::vector<expr::FeatureExpr>& derived() const { return derived_; }
  const std::vector<bool>& mask() const { return mask_; }
  const SetLimits& limits() const { return limits_; }

  std::size_t size() const { return mask_.size(); }
  std::size_t live_count() const;
  std::size_t live_derived_count() const;
  bool is_live(std::size_t index) const { return mask_.at(index); }

  // Live display names, base first (schema order) then derived (insertion
  // order); the column order of materialized matrices.
  std::vector<std::string> live_names() const;

  // Canonical key of a live entry by display name; empty when not live.
  std::string live_key_of(const std::string& name) const;

  bool has_live_key(const std::string& canonical) const;

  // Identity of the live set for score caching: live canonical keys in
  // materialization order, joined by '|'.
  std::string set_key() const;

  // Comma-joined postfix renderings of the live features.
  std::string token_sequence() const;

  nlohmann::json to_json() const;
  static FeatureSet from_json(const nlohmann::json& j, SetLimits limits = {});

 private:
  friend GenerationOutcome apply_generation(const FeatureSet&, const GenerationAction&,
                                            const data::Frame&);
  friend SelectionOutcome apply_selection(const FeatureSet&, const SelectionAction&);

  std::vector<std::string> base_;
  std::vector<expr::FeatureExpr> derived_;
  std::vector<bool> mask_;
  SetLimits limits_;
};

struct GenerationAction {
  std::vector<expr::FeatureExpr> exprs;  // 1 to 3 entries
};

struct SelectionAction {
  std::vector<std::string> drop;  // live display names, highest priority first
};

struct GenerationOutcome {
  FeatureSet set;
  int accepted = 0;
  int rejected_duplicate = 0;
  int rejected_constant = 0;
  int rejected_nonfinite = 0;
  int rejected_cap = 0;  // valid candidates truncated at the live-count cap

  bool is_noop() const { return accepted == 0; }
};

struct SelectionOutcome {
  FeatureSet set;
  std::vector<std::string> dropped;
  int trimmed = 0;        // drop requests undone to hold the floor
  bool floor_hit = false;

  bool is_noop() const { return dropped.empty(); }
};

// Live columns of the set, honoring the floor.
data::FeatureMatrix materialize(const FeatureSet& fs, const data::Frame& frame);

}  // namespace featforge::pipeline
