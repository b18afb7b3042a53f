#pragma once

#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "walkergeo/jet.h"

namespace walkergeo {

// Grammar (whitespace insignificant):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' exponent)*
//   exponent:= '-'? NUMBER | '(' '-'? NUMBER ')'
//   primary := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
//   FUNC    := exp | ln | sin | cos | sqrt
// Numbers are decimal with optional fraction and exponent. "2u" is an error.

enum class NodeKind { kNumber, kVariable, kAdd, kSub, kMul, kDiv, kPow, kNeg, kCall };
enum class Func { kExp, kLn, kSin, kCos, kSqrt };

const char* func_name(Func f);

struct Node {
  NodeKind kind;
  double number = 0.0;  // literal value, or the exponent of kPow
  std::string name;     // variable name
  Func func = Func::kExp;
  std::shared_ptr<const Node> lhs;  // also the operand of kNeg, kPow, kCall
  std::shared_ptr<const Node> rhs;
  std::ptrdiff_t offset = -1;  // byte offset in the source, -1 for built nodes
};

class Expr {
 public:
  Expr();  // literal 0
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  static Expr parse(std::string_view source);
  static Expr number(double value);
  static Expr variable(std::string name);
  static Expr call(Func f, const Expr& arg);

  const Node& root() const { return *root_; }
  const std::shared_ptr<const Node>& root_ptr() const { return root_; }

  // Canonical text; parse(to_string()) reproduces the tree.
  std::string to_string() const;
  bool references(std::string_view name) const;
  std::set<std::string> variables() const;
  // Literal zero, possibly negated.
  bool is_zero_literal() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  std::shared_ptr<const Node> root_;
};

// Builders fold literal arithmetic and the identities 0+x, x*1, 0*x.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator*(double a, const Expr& b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);
Expr pow(const Expr& a, double p);
Expr exp(const Expr& a);
Expr ln(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr sqrt(const Expr& a);

// Partial derivative in `var`, simplified only by the builder folds.
Expr diff(const Expr& e, std::string_view var);
// Replaces every occurrence of variable `var` by `by`.
Expr substitute(const Expr& e, std::string_view var, const Expr& by);

// Ordered, uniquely named bindings.
class Env {
 public:
  void bind(std::string name, Jet value);
  const Jet* find(std::string_view name) const;
  const std::vector<std::pair<std::string, Jet>>& bindings() const { return bindings_; }

 private:
  std::vector<std::pair<std::string, Jet>> bindings_;
};

// Expression resolved against a fixed list of slot names; evaluation is a
// stack-machine pass over the slots. Unknown names fail at construction.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& expr, std::span<const std::string> slots);

  // All slot jets share one layout; `layout` is used when there are none.
  Jet operator()(std::span<const Jet> slots) const;
  Jet operator()(std::span<const Jet> slots, const JetLayout& layout) const;
  double value(std::span<const double> slots) const;

  bool uses_slot(int slot) const;

 private:
  enum class Op { kConst, kSlot, kAdd, kSub, kMul, kDiv, kNeg, kPow, kExp, kLn, kSin, kCos, kSqrt };
  struct Instr {
    Op op;
    int slot = 0;
    double num = 0.0;
    std::ptrdiff_t offset = -1;
  };
  void emit(const Node& node, std::span<const std::string> slots);

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

Jet evaluate(const Expr& expr, const Env& env);

}  // namespace walkergeo
