#pragma once

// Reference model for expression tests: an explicit tree with recursive
// evaluation and key construction. The production code walks a token stack;
// agreement between the two is what the tests check.

#include <memory>
#include <string>
#include <vector>

#include "featforge/expr.hpp"
#include "featforge/rng.hpp"

namespace oracle {

struct Node {
  enum class Kind { Leaf, Unary, Binary };

  Kind kind = Kind::Leaf;
  std::string feature;
  featforge::expr::UnaryOp u{};
  featforge::expr::BinaryOp b{};
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;

  static std::unique_ptr<Node> leaf(std::string name) {
    auto n = std::make_unique<Node>();
    n->kind = Kind::Leaf;
    n->feature = std::move(name);
    return n;
  }
  static std::unique_ptr<Node> unary(featforge::expr::UnaryOp op,
                                     std::unique_ptr<Node> child) {
    auto n = std::make_unique<Node>();
    n->kind = Kind::Unary;
    n->u = op;
    n->left = std::move(child);
    return n;
  }
  static std::unique_ptr<Node> binary(featforge::expr::BinaryOp op,
                                      std::unique_ptr<Node> l,
                                      std::unique_ptr<Node> r) {
    auto n = std::make_unique<Node>();
    n->kind = Kind::Binary;
    n->b = op;
    n->left = std::move(l);
    n->right = std::move(r);
    return n;
  }
};

inline int depth(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Leaf: return 0;
    case Node::Kind::Unary: return 1 + depth(*n.left);
    case Node::Kind::Binary: return 1 + std::max(depth(*n.left), depth(*n.right));
  }
  return 0;
}

inline int token_count(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Leaf: return 1;
    case Node::Kind::Unary: return 1 + token_count(*n.left);
    case Node::Kind::Binary: return 1 + token_count(*n.left) + token_count(*n.right);
  }
  return 0;
}

inline void emit_postfix(const Node& n, std::vector<featforge::expr::Token>& out) {
  using featforge::expr::Token;
  switch (n.kind) {
    case Node::Kind::Leaf:
      out.push_back(Token::make_feature(n.feature));
      break;
    case Node::Kind::Unary:
      emit_postfix(*n.left, out);
      out.push_back(Token::make_unary(n.u));
      break;
    case Node::Kind::Binary:
      emit_postfix(*n.left, out);
      emit_postfix(*n.right, out);
      out.push_back(Token::make_binary(n.b));
      break;
  }
}

inline std::string key(const Node& n) {
  using featforge::expr::binary_symbol;
  using featforge::expr::is_commutative;
  using featforge::expr::unary_name;
  switch (n.kind) {
    case Node::Kind::Leaf:
      return n.feature;
    case Node::Kind::Unary:
      return std::string(unary_name(n.u)) + "(" + key(*n.left) + ")";
    case Node::Kind::Binary: {
      std::string a = key(*n.left);
      std::string b = key(*n.right);
      if (is_commutative(n.b) && b < a) std::swap(a, b);
      return "(" + a + " " + std::string(binary_symbol(n.b)) + " " + b + ")";
    }
  }
  return {};
}

// Scalar recursion over one row of named inputs.
inline double eval_row(
    const Node& n, const std::vector<std::string>& names,
    const std::vector<double>& row) {
  using featforge::expr::apply_binary;
  using featforge::expr::apply_unary;
  switch (n.kind) {
    case Node::Kind::Leaf:
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == n.feature) return row[i];
      }
      return 0.0;
    case Node::Kind::Unary:
      return apply_unary(n.u, eval_row(*n.left, names, row));
    case Node::Kind::Binary:
      return apply_binary(n.b, eval_row(*n.left, names, row),
                          eval_row(*n.right, names, row));
  }
  return 0.0;
}

// Random tree bounded by an operator-depth budget. Leans toward leaves as the
// budget shrinks so generated shapes vary.
inline std::unique_ptr<Node> random_tree(featforge::Rng& rng,
                                         const std::vector<std::string>& schema,
                                         int depth_budget) {
  using featforge::expr::BinaryOp;
  using featforge::expr::UnaryOp;
  if (depth_budget <= 0 || rng.uniform() < 0.35) {
    return Node::leaf(schema[rng.index(schema.size())]);
  }
  if (rng.uniform() < 0.5) {
    const auto op = static_cast<UnaryOp>(rng.index(featforge::expr::kUnaryCount));
    return Node::unary(op, random_tree(rng, schema, depth_budget - 1));
  }
  const auto op = static_cast<BinaryOp>(rng.index(featforge::expr::kBinaryCount));
  return Node::binary(op, random_tree(rng, schema, depth_budget - 1),
                      random_tree(rng, schema, depth_budget - 1));
}

}  // namespace oracle
