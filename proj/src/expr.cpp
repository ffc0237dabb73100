#include "featforge/expr.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "featforge/errors.hpp"

namespace featforge::expr {

namespace {

constexpr std::array<std::string_view, kUnaryCount> kUnaryNames = {
    "square", "cube", "sqrt_abs", "log_abs", "exp_clip",
    "sin",    "cos",  "tanh",     "recip"};

constexpr std::array<std::string_view, kBinaryCount> kBinarySymbols = {"+", "-", "*", "/"};

double guarded_sign(double x) { return x < 0.0 ? -1.0 : 1.0; }  // sign(0) = +1

}  // namespace

std::string_view unary_name(UnaryOp op) { return kUnaryNames[static_cast<int>(op)]; }

std::string_view binary_symbol(BinaryOp op) { return kBinarySymbols[static_cast<int>(op)]; }

std::optional<UnaryOp> unary_from_name(std::string_view s) {
  for (int i = 0; i < kUnaryCount; ++i) {
    if (kUnaryNames[i] == s) return static_cast<UnaryOp>(i);
  }
  return std::nullopt;
}

std::optional<BinaryOp> binary_from_symbol(std::string_view s) {
  for (int i = 0; i < kBinaryCount; ++i) {
    if (kBinarySymbols[i] == s) return static_cast<BinaryOp>(i);
  }
  return std::nullopt;
}

bool is_operator_spelling(std::string_view s) {
  return unary_from_name(s).has_value() || binary_from_symbol(s).has_value();
}

bool is_commutative(BinaryOp op) { return op == BinaryOp::Add || op == BinaryOp::Mul; }

double apply_unary(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::Square: return x * x;
    case UnaryOp::Cube: return x * x * x;
    case UnaryOp::SqrtAbs: return std::sqrt(std::fabs(x));
    case UnaryOp::LogAbs: return std::log(std::fabs(x) + 1e-8);
    case UnaryOp::ExpClip: return std::exp(std::min(x, 50.0));
    case UnaryOp::Sin: return std::sin(x);
    case UnaryOp::Cos: return std::cos(x);
    case UnaryOp::Tanh: return std::tanh(x);
    case UnaryOp::Recip: return 1.0 / (guarded_sign(x) * (std::fabs(x) + 1e-8));
  }
  return 0.0;
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return a / (guarded_sign(b) * (std::fabs(b) + 1e-8));
  }
  return 0.0;
}

Token Token::make_feature(std::string name) {
  Token t;
  t.kind = Kind::Feature;
  t.feature = std::move(name);
  return t;
}

Token Token::make_unary(UnaryOp op) {
  Token t;
  t.kind = Kind::Unary;
  t.unary = op;
  return t;
}

Token Token::make_binary(BinaryOp op) {
  Token t;
  t.kind = Kind::Binary;
  t.binary = op;
  return t;
}

bool Token::operator==(const Token& other) const {
  if (kind != other.kind) return false;
  switch (kind) {
    case Kind::Feature: return feature == other.feature;
    case Kind::Unary: return unary == other.unary;
    case Kind::Binary: return binary == other.binary;
  }
  return false;
}

std::string Token::spelling() const {
  switch (kind) {
    case Kind::Feature: return feature;
    case Kind::Unary: return std::string(unary_name(unary));
    case Kind::Binary: return std::string(binary_symbol(binary));
  }
  return {};
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string derived_name(const std::string& canonical_key) {
  static const char* hex = "0123456789abcdef";
  const std::uint64_t h = fnv1a64(canonical_key);
  std::string out = "g";
  for (int i = 11; i >= 0; --i) {
    out.push_back(hex[(h >> (i * 4)) & 0xF]);
  }
  return out;
}

namespace {

struct StackEntry {
  int depth;            // operator nesting below this value
  std::string key;      // canonical key of the subtree
};

// Single stack walk computing validity, depth, and the canonical key.
// Commutative operands are ordered lexicographically by their own keys.
StackEntry simulate(const std::vector<Token>& tokens, const ExprLimits& limits) {
  if (tokens.empty()) {
    throw Error(ErrorCode::MalformedExpression, "empty expression");
  }
  if (static_cast<int>(tokens.size()) > limits.max_tokens) {
    throw Error(ErrorCode::MalformedExpression,
                "expression exceeds token cap of " + std::to_string(limits.max_tokens));
  }
  std::vector<StackEntry> stack;
  for (const Token& t : tokens) {
    switch (t.kind) {
      case Token::Kind::Feature:
        stack.push_back({0, t.feature});
        break;
      case Token::Kind::Unary: {
        if (stack.empty()) {
          throw Error(ErrorCode::MalformedExpression,
                      "operator '" + t.spelling() + "' underflows the stack");
        }
        StackEntry c = std::move(stack.back());
        stack.pop_back();
        std::string key(unary_name(t.unary));
        key += "(" + c.key + ")";
        stack.push_back({c.depth + 1, std::move(key)});
        break;
      }
      case Token::Kind::Binary: {
        if (stack.size() < 2) {
          throw Error(ErrorCode::MalformedExpression,
                      "operator '" + t.spelling() + "' underflows the stack");
        }
        StackEntry rhs = std::move(stack.back());
        stack.pop_back();
        StackEntry lhs = std::move(stack.back());
        stack.pop_back();
        const std::string* a = &lhs.key;
        const std::string* b = &rhs.key;
        if (is_commutative(t.binary) && *b < *a) std::swap(a, b);
        std::string key = "(" + *a + " " + std::string(binary_symbol(t.binary)) + " " + *b + ")";
        stack.push_back({std::max(lhs.depth, rhs.depth) + 1, std::move(key)});
        break;
      }
    }
  }
  if (stack.size() != 1) {
    throw Error(ErrorCode::MalformedExpression,
                "expression leaves " + std::to_string(stack.size()) +
                    " values on the stack (expected 1)");
  }
  if (stack.front().depth > limits.max_depth) {
    throw Error(ErrorCode::MalformedExpression,
                "expression exceeds depth cap of " + std::to_string(limits.max_depth));
  }
  return std::move(stack.front());
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

FeatureExpr FeatureExpr::from_tokens(std::vector<Token> tokens, const ExprLimits& limits) {
  StackEntry top = simulate(tokens, limits);
  FeatureExpr e;
  e.tokens_ = std::move(tokens);
  e.depth_ = top.depth;
  e.canonical_ = std::move(top.key);
  e.name_ = e.tokens_.size() == 1 && e.tokens_.front().kind == Token::Kind::Feature
                ? e.tokens_.front().feature
                : derived_name(e.canonical_);
  return e;
}

bool FeatureExpr::is_bare_feature() const {
  return tokens_.size() == 1 && tokens_.front().kind == Token::Kind::Feature;
}

std::vector<FeatureExpr> parse_postfix(std::string_view text,
                                       const std::vector<std::string>& schema,
                                       const ExprLimits& limits) {
  if (text.empty()) {
    throw Error(ErrorCode::MalformedExpression, "empty expression text");
  }
  std::vector<FeatureExpr> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view part = text.substr(start, comma - start);
    const auto words = split_ws(part);
    if (words.empty()) {
      throw Error(ErrorCode::MalformedExpression, "empty expression between commas");
    }
    std::vector<Token> tokens;
    tokens.reserve(words.size());
    for (std::string_view w : words) {
      if (auto u = unary_from_name(w)) {
        tokens.push_back(Token::make_unary(*u));
      } else if (auto b = binary_from_symbol(w)) {
        tokens.push_back(Token::make_binary(*b));
      } else if (std::find(schema.begin(), schema.end(), w) != schema.end()) {
        tokens.push_back(Token::make_feature(std::string(w)));
      } else {
        throw Error(ErrorCode::UnknownToken,
                    "token '" + std::string(w) + "' is neither a column nor an operator");
      }
    }
    out.push_back(FeatureExpr::from_tokens(std::move(tokens), limits));
    if (comma == text.size()) break;
    start = comma + 1;
  }
  return out;
}

std::string render_postfix(const FeatureExpr& e) {
  std::string out;
  for (std::size_t i = 0; i < e.tokens().size(); ++i) {
    if (i > 0) out += ' ';
    out += e.tokens()[i].spelling();
  }
  return out;
}

std::string render_infix(const FeatureExpr& e) {
  std::vector<std::string> stack;
  for (const Token& t : e.tokens()) {
    switch (t.kind) {
      case Token::Kind::Feature:
        stack.push_back(t.feature);
        break;
      case Token::Kind::Unary: {
        std::string c = std::move(stack.back());
        stack.pop_back();
        if (t.unary == UnaryOp::Square) {
          stack.push_back("(" + c + ")^2");
        } else if (t.unary == UnaryOp::Cube) {
          stack.push_back("(" + c + ")^3");
        } else {
          stack.push_back(std::string(unary_name(t.unary)) + "(" + c + ")");
        }
        break;
      }
      case Token::Kind::Binary: {
        std::string r = std::move(stack.back());
        stack.pop_back();
        std::string l = std::move(stack.back());
        stack.pop_back();
        stack.push_back("(" + l + " " + std::string(binary_symbol(t.binary)) + " " + r + ")");
        break;
      }
    }
  }
  return std::move(stack.front());
}

std::vector<double> evaluate(const FeatureExpr& e, const ColumnLookup& columns,
                             std::size_t n_rows) {
  std::vector<std::vector<double>> stack;
  for (const Token& t : e.tokens()) {
    switch (t.kind) {
      case Token::Kind::Feature: {
        const std::vector<double>* col = columns(t.feature);
        if (col == nullptr) {
          throw Error(ErrorCode::MissingColumn, "column '" + t.feature + "' not found");
        }
        if (col->size() != n_rows) {
          throw Error(ErrorCode::LengthMismatch,
                      "column '" + t.feature + "' has " + std::to_string(col->size()) +
                          " rows, expected " + std::to_string(n_rows));
        }
        stack.push_back(*col);
        break;
      }
      case Token::Kind::Unary: {
        std::vector<double>& v = stack.back();
        for (double& x : v) x = apply_unary(t.unary, x);
        break;
      }
      case Token::Kind::Binary: {
        std::vector<double> rhs = std::move(stack.back());
        stack.pop_back();
        std::vector<double>& lhs = stack.back();
        for (std::size_t i = 0; i < n_rows; ++i) {
          lhs[i] = apply_binary(t.binary, lhs[i], rhs[i]);
        }
        break;
      }
    }
  }
  return std::move(stack.front());
}

}  // namespace featforge::expr
