#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace featforge::expr {

enum class UnaryOp { Square, Cube, SqrtAbs, LogAbs, ExpClip, Sin, Cos, Tanh, Recip };
enum class BinaryOp { Add, Sub, Mul, Div };

inline constexpr int kUnaryCount = 9;
inline constexpr int kBinaryCount = 4;

// Text spellings of the postfix grammar. Binary operators use the arithmetic
// symbols, unary operators their guard-qualified names (`recip` spells the
// guarded reciprocal).
std::string_view unary_name(UnaryOp op);
std::string_view binary_symbol(BinaryOp op);
std::optional<UnaryOp> unary_from_name(std::string_view s);
std::optional<BinaryOp> binary_from_symbol(std::string_view s);
bool is_operator_spelling(std::string_view s);

bool is_commutative(BinaryOp op);

// Guarded scalar semantics. Total and finite on the documented input range;
// guards replace rejection so the search never stalls on bad operands.
double apply_unary(UnaryOp op, double x);
double apply_binary(BinaryOp op, double a, double b);

struct Token {
  enum class Kind { Feature, Unary, Binary };

  Kind kind;
  std::string feature;  // set iff kind == Feature
  UnaryOp unary{};      // set iff kind == Unary
  BinaryOp binary{};    // set iff kind == Binary

  static Token make_feature(std::string name);
  static Token make_unary(UnaryOp op);
  static Token make_binary(BinaryOp op);

  bool operator==(const Token& other) const;
  std::string spelling() const;
};

struct ExprLimits {
  int max_depth = 4;    // operator nesting; a bare feature has depth 0
  int max_tokens = 25;
};

// One derived feature as a validated postfix token sequence over base
// columns. Immutable after construction; the display name and canonical key
// are derived from the tokens.
class FeatureExpr {
 public:
  // Validates stack-shape and caps; throws MalformedExpression on violation.
  // Feature tokens are not checked against any schema here (parse_postfix
  // does that); this is the constructor used by generators composing tokens.
  static FeatureExpr from_tokens(std::vector<Token> tokens,
                                 const ExprLimits& limits = {});

  const std::vector<Token>& tokens() const { return tokens_; }
  const std::string& name() const { return name_; }
  const std::string& canonical_key() const { return canonical_; }
  int depth() const { return depth_; }

  // True when the expression is a single base-feature reference.
  bool is_bare_feature() const;

  bool operator==(const FeatureExpr& other) const { return tokens_ == other.tokens_; }

 private:
  FeatureExpr() = default;

  std::vector<Token> tokens_;
  std::string name_;
  std::string canonical_;
  int depth_ = 0;
};

// Parses comma-separated postfix expressions. Every feature token must name a
// schema column; operator spellings are reserved words. Throws UnknownToken
// or MalformedExpression.
std::vector<FeatureExpr> parse_postfix(std::string_view text,
                                       const std::vector<std::string>& schema,
                                       const ExprLimits& limits = {});

// Inverse of parse_postfix for a single expression: tokens joined by single
// spaces. parse_postfix(render_postfix(e)) reproduces e token-for-token.
std::string render_postfix(const FeatureExpr& e);

// Fully parenthesized infix form for reports and traces, e.g.
// "(f1 * f2)", "sin(f3)", "((f4 - f5))^2".
std::string render_infix(const FeatureExpr& e);

// Column access used by evaluate: returns nullptr when the column is absent.
using ColumnLookup = std::function<const std::vector<double>*(const std::string&)>;

// Stack-machine evaluation over column vectors of length n_rows. Throws
// MissingColumn or LengthMismatch. Output is finite wherever the operator
// guards hold.
std::vector<double> evaluate(const FeatureExpr& e, const ColumnLookup& columns,
                             std::size_t n_rows);

std::uint64_t fnv1a64(std::string_view s);

// Display name for a derived feature: "g" + 12 hex digits of the canonical
// key hash. Stable across runs.
std::string derived_name(const std::string& canonical_key);

}  // namespace featforge::expr
