#include "walkergeo/expr.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <system_error>

#include "walkergeo/errors.h"

namespace walkergeo {

ParseError::ParseError(std::size_t offset, std::string expected)
    : Error("syntax error at offset " + std::to_string(offset) + ": expected " + expected),
      offset_(offset),
      expected_(std::move(expected)) {}

UnboundVariableError::UnboundVariableError(std::string name)
    : Error("unbound variable '" + name + "'"), name_(std::move(name)) {}

DomainError::DomainError(const std::string& what, std::ptrdiff_t offset)
    : Error(offset >= 0 ? what + " (at offset " + std::to_string(offset) + ")" : what),
      offset_(offset) {}

const char* func_name(Func f) {
  switch (f) {
    case Func::kExp: return "exp";
    case Func::kLn: return "ln";
    case Func::kSin: return "sin";
    case Func::kCos: return "cos";
    case Func::kSqrt: return "sqrt";
  }
  return "?";
}

namespace {

using NodePtr = std::shared_ptr<const Node>;

NodePtr make_number(double v, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::kNumber;
  n->number = v;
  n->offset = off;
  return n;
}

NodePtr make_variable(std::string name, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::kVariable;
  n->name = std::move(name);
  n->offset = off;
  return n;
}

NodePtr make_binary(NodeKind k, NodePtr a, NodePtr b, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  n->offset = off;
  return n;
}

NodePtr make_neg(NodePtr a, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::kNeg;
  n->lhs = std::move(a);
  n->offset = off;
  return n;
}

NodePtr make_pow(NodePtr a, double p, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::kPow;
  n->lhs = std::move(a);
  n->number = p;
  n->offset = off;
  return n;
}

NodePtr make_call(Func f, NodePtr a, std::ptrdiff_t off = -1) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::kCall;
  n->func = f;
  n->lhs = std::move(a);
  n->offset = off;
  return n;
}

bool lookup_func(std::string_view id, Func& f) {
  static const std::pair<const char*, Func> table[] = {
      {"exp", Func::kExp}, {"ln", Func::kLn}, {"sin", Func::kSin},
      {"cos", Func::kCos}, {"sqrt", Func::kSqrt}};
  for (const auto& [name, fn] : table) {
    if (id == name) {
      f = fn;
      return true;
    }
  }
  return false;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("operator or end of input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& expected) const { throw ParseError(pos_, expected); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('+')) {
        lhs = make_binary(NodeKind::kAdd, lhs, term(), at);
      } else if (accept('-')) {
        lhs = make_binary(NodeKind::kSub, lhs, term(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('*')) {
        lhs = make_binary(NodeKind::kMul, lhs, unary(), at);
      } else if (accept('/')) {
        lhs = make_binary(NodeKind::kDiv, lhs, unary(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    skip_ws();
    const std::size_t at = pos_;
    if (accept('-')) return make_neg(unary(), at);
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (!accept('^')) return base;
      base = make_pow(base, exponent(), at);
    }
  }

  double exponent() {
    const bool paren = accept('(');
    const bool neg = accept('-');
    skip_ws();
    if (!starts_number()) fail("constant exponent");
    double v = number();
    if (paren && !accept(')')) fail("')'");
    return neg ? -v : v;
  }

  bool starts_number() const {
    if (pos_ >= src_.size()) return false;
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
    return c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]));
  }

  double number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        digits();
      } else {
        pos_ = save;
        fail("digits in exponent");
      }
    }
    double v = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("number");
    }
    if (pos_ < src_.size() &&
        (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      fail("operator (implicit multiplication is not allowed)");
    return v;
  }

  NodePtr primary() {
    skip_ws();
    const std::size_t at = pos_;
    if (pos_ >= src_.size()) fail("operand");
    const char c = src_[pos_];
    if (starts_number()) return make_number(number(), at);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      std::string id(src_.substr(at, pos_ - at));
      Func f;
      if (lookup_func(id, f)) {
        if (!accept('(')) fail("'(' after function name " + id);
        NodePtr arg = expr();
        if (!accept(')')) fail("')'");
        return make_call(f, arg, at);
      }
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == '(') fail("operator (unknown function " + id + ")");
      return make_variable(std::move(id), at);
    }
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("')'");
      return e;
    }
    fail("operand");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

int precedence(const Node& n) {
  switch (n.kind) {
    case NodeKind::kAdd:
    case NodeKind::kSub: return 1;
    case NodeKind::kMul:
    case NodeKind::kDiv: return 2;
    case NodeKind::kNeg: return 3;
    case NodeKind::kPow: return 4;
    default: return 5;
  }
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void print(const Node& n, int min_prec, std::string& out) {
  const bool paren = precedence(n) < min_prec;
  if (paren) out += '(';
  switch (n.kind) {
    case NodeKind::kNumber: out += format_number(n.number); break;
    case NodeKind::kVariable: out += n.name; break;
    case NodeKind::kAdd:
    case NodeKind::kSub:
      print(*n.lhs, 1, out);
      out += n.kind == NodeKind::kAdd ? " + " : " - ";
      print(*n.rhs, 2, out);
      break;
    case NodeKind::kMul:
    case NodeKind::kDiv:
      print(*n.lhs, 2, out);
      out += n.kind == NodeKind::kMul ? "*" : "/";
      print(*n.rhs, 3, out);
      break;
    case NodeKind::kNeg:
      out += '-';
      print(*n.lhs, 3, out);
      break;
    case NodeKind::kPow:
      print(*n.lhs, 4, out);
      out += '^';
      out += format_number(n.number);
      break;
    case NodeKind::kCall:
      out += func_name(n.func);
      out += '(';
      print(*n.lhs, 0, out);
      out += ')';
      break;
  }
  if (paren) out += ')';
}

bool equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::kNumber: return a.number == b.number;
    case NodeKind::kVariable: return a.name == b.name;
    case NodeKind::kNeg: return equal(*a.lhs, *b.lhs);
    case NodeKind::kPow: return a.number == b.number && equal(*a.lhs, *b.lhs);
    case NodeKind::kCall: return a.func == b.func && equal(*a.lhs, *b.lhs);
    default: return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
  }
}

void collect(const Node& n, std::set<std::string>& names) {
  if (n.kind == NodeKind::kVariable) names.insert(n.name);
  if (n.lhs) collect(*n.lhs, names);
  if (n.rhs) collect(*n.rhs, names);
}

// Literal value when the node is a (possibly negated) number.
bool literal(const Node& n, double& v) {
  if (n.kind == NodeKind::kNumber) {
    v = n.number;
    return true;
  }
  if (n.kind == NodeKind::kNeg && literal(*n.lhs, v)) {
    v = -v;
    return true;
  }
  return false;
}

}  // namespace

Expr::Expr() : root_(make_number(0.0)) {}

Expr Expr::parse(std::string_view source) { return Expr(Parser(source).parse()); }

Expr Expr::number(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("non-finite literal");
  if (std::signbit(value) && value != 0.0) return Expr(make_neg(make_number(-value)));
  return Expr(make_number(value == 0.0 ? 0.0 : value));
}

Expr Expr::variable(std::string name) { return Expr(make_variable(std::move(name))); }

Expr Expr::call(Func f, const Expr& arg) {
  double v;
  if (literal(arg.root(), v)) {
    switch (f) {
      case Func::kExp: return number(std::exp(v));
      case Func::kSin: return number(std::sin(v));
      case Func::kCos: return number(std::cos(v));
      default: break;
    }
  }
  return Expr(make_call(f, arg.root_ptr()));
}

std::string Expr::to_string() const {
  std::string out;
  print(*root_, 0, out);
  return out;
}

bool Expr::references(std::string_view name) const {
  std::function<bool(const Node&)> walk = [&](const Node& n) {
    if (n.kind == NodeKind::kVariable && n.name == name) return true;
    return (n.lhs && walk(*n.lhs)) || (n.rhs && walk(*n.rhs));
  };
  return walk(*root_);
}

std::set<std::string> Expr::variables() const {
  std::set<std::string> names;
  collect(*root_, names);
  return names;
}

bool Expr::is_zero_literal() const {
  double v;
  return literal(*root_, v) && v == 0.0;
}

bool operator==(const Expr& a, const Expr& b) { return equal(a.root(), b.root()); }

Expr operator+(const Expr& a, const Expr& b) {
  double x, y;
  const bool la = literal(a.root(), x), lb = literal(b.root(), y);
  if (la && lb) return Expr::number(x + y);
  if (la && x == 0.0) return b;
  if (lb && y == 0.0) return a;
  if (lb && y < 0.0) return Expr(make_binary(NodeKind::kSub, a.root_ptr(), make_number(-y)));
  if (b.root().kind == NodeKind::kNeg)
    return Expr(make_binary(NodeKind::kSub, a.root_ptr(), b.root().lhs));
  return Expr(make_binary(NodeKind::kAdd, a.root_ptr(), b.root_ptr()));
}

Expr operator-(const Expr& a, const Expr& b) {
  double x, y;
  const bool la = literal(a.root(), x), lb = literal(b.root(), y);
  if (la && lb) return Expr::number(x - y);
  if (lb && y == 0.0) return a;
  if (la && x == 0.0) return -b;
  if (b.root().kind == NodeKind::kNeg)
    return Expr(make_binary(NodeKind::kAdd, a.root_ptr(), b.root().lhs));
  return Expr(make_binary(NodeKind::kSub, a.root_ptr(), b.root_ptr()));
}

Expr operator*(const Expr& a, const Expr& b) {
  double x, y;
  const bool la = literal(a.root(), x), lb = literal(b.root(), y);
  if (la && lb) return Expr::number(x * y);
  if ((la && x == 0.0) || (lb && y == 0.0)) return Expr::number(0.0);
  if (la && x == 1.0) return b;
  if (lb && y == 1.0) return a;
  if (la && x == -1.0) return -b;
  if (lb && y == -1.0) return -a;
  if (la && x < 0.0) return -(Expr::number(-x) * b);
  if (lb && y < 0.0) return -(a * Expr::number(-y));
  return Expr(make_binary(NodeKind::kMul, a.root_ptr(), b.root_ptr()));
}

Expr operator/(const Expr& a, const Expr& b) {
  double x, y;
  const bool la = literal(a.root(), x), lb = literal(b.root(), y);
  if (lb && y == 0.0) throw DomainError("division by literal zero");
  if (la && lb) return Expr::number(x / y);
  if (la && x == 0.0) return Expr::number(0.0);
  if (lb && y == 1.0) return a;
  return Expr(make_binary(NodeKind::kDiv, a.root_ptr(), b.root_ptr()));
}

Expr operator-(const Expr& a) {
  double x;
  if (literal(a.root(), x)) return Expr::number(-x);
  if (a.root().kind == NodeKind::kNeg) return Expr(a.root().lhs);
  return Expr(make_neg(a.root_ptr()));
}

Expr operator+(const Expr& a, double b) { return a + Expr::number(b); }
Expr operator+(double a, const Expr& b) { return Expr::number(a) + b; }
Expr operator-(const Expr& a, double b) { return a - Expr::number(b); }
Expr operator-(double a, const Expr& b) { return Expr::number(a) - b; }
Expr operator*(const Expr& a, double b) { return a * Expr::number(b); }
Expr operator*(double a, const Expr& b) { return Expr::number(a) * b; }
Expr operator/(const Expr& a, double b) { return a / Expr::number(b); }
Expr operator/(double a, const Expr& b) { return Expr::number(a) / b; }

Expr pow(const Expr& a, double p) {
  if (p == 1.0) return a;
  if (p == 0.0) return Expr::number(1.0);
  double x;
  if (literal(a.root(), x) && std::floor(p) == p) return Expr::number(std::pow(x, p));
  return Expr(make_pow(a.root_ptr(), p));
}

Expr exp(const Expr& a) { return Expr::call(Func::kExp, a); }
Expr ln(const Expr& a) { return Expr::call(Func::kLn, a); }
Expr sin(const Expr& a) { return Expr::call(Func::kSin, a); }
Expr cos(const Expr& a) { return Expr::call(Func::kCos, a); }
Expr sqrt(const Expr& a) { return Expr::call(Func::kSqrt, a); }

namespace {

Expr diff_node(const std::shared_ptr<const Node>& np, std::string_view var) {
  const Node& n = *np;
  switch (n.kind) {
    case NodeKind::kNumber: return Expr::number(0.0);
    case NodeKind::kVariable: return Expr::number(n.name == var ? 1.0 : 0.0);
    case NodeKind::kNeg: return -diff_node(n.lhs, var);
    case NodeKind::kAdd: return diff_node(n.lhs, var) + diff_node(n.rhs, var);
    case NodeKind::kSub: return diff_node(n.lhs, var) - diff_node(n.rhs, var);
    case NodeKind::kMul: {
      const Expr a(n.lhs), b(n.rhs);
      return diff_node(n.lhs, var) * b + a * diff_node(n.rhs, var);
    }
    case NodeKind::kDiv: {
      const Expr a(n.lhs), b(n.rhs);
      const Expr da = diff_node(n.lhs, var), db = diff_node(n.rhs, var);
      return da / b - a * db / pow(b, 2.0);
    }
    case NodeKind::kPow: {
      const Expr a(n.lhs);
      return n.number * pow(a, n.number - 1.0) * diff_node(n.lhs, var);
    }
    case NodeKind::kCall: {
      const Expr a(n.lhs), self(np);
      const Expr da = diff_node(n.lhs, var);
      if (da.is_zero_literal()) return da;
      switch (n.func) {
        case Func::kExp: return self * da;
        case Func::kLn: return da / a;
        case Func::kSin: return cos(a) * da;
        case Func::kCos: return -(sin(a) * da);
        case Func::kSqrt: return da / (2.0 * self);
      }
    }
  }
  return Expr::number(0.0);
}

Expr substitute_node(const std::shared_ptr<const Node>& np, std::string_view var, const Expr& by) {
  const Node& n = *np;
  switch (n.kind) {
    case NodeKind::kNumber: return Expr(np);
    case NodeKind::kVariable: return n.name == var ? by : Expr(np);
    case NodeKind::kNeg: return -substitute_node(n.lhs, var, by);
    case NodeKind::kAdd: return substitute_node(n.lhs, var, by) + substitute_node(n.rhs, var, by);
    case NodeKind::kSub: return substitute_node(n.lhs, var, by) - substitute_node(n.rhs, var, by);
    case NodeKind::kMul: return substitute_node(n.lhs, var, by) * substitute_node(n.rhs, var, by);
    case NodeKind::kDiv: return substitute_node(n.lhs, var, by) / substitute_node(n.rhs, var, by);
    case NodeKind::kPow: return pow(substitute_node(n.lhs, var, by), n.number);
    case NodeKind::kCall: return Expr::call(n.func, substitute_node(n.lhs, var, by));
  }
  return Expr(np);
}

}  // namespace

Expr diff(const Expr& e, std::string_view var) { return diff_node(e.root_ptr(), var); }

Expr substitute(const Expr& e, std::string_view var, const Expr& by) {
  return substitute_node(e.root_ptr(), var, by);
}

void Env::bind(std::string name, Jet value) {
  if (find(name)) throw std::invalid_argument("duplicate binding '" + name + "'");
  bindings_.emplace_back(std::move(name), std::move(value));
}

const Jet* Env::find(std::string_view name) const {
  for (const auto& [n, v] : bindings_)
    if (n == name) return &v;
  return nullptr;
}

CompiledExpr::CompiledExpr(const Expr& expr, std::span<const std::string> slots) {
  emit(expr.root(), slots);
  int depth = 0;
  for (const Instr& in : code_) {
    if (in.op == Op::kConst || in.op == Op::kSlot) {
      max_depth_ = std::max(max_depth_, ++depth);
    } else if (in.op == Op::kAdd || in.op == Op::kSub || in.op == Op::kMul || in.op == Op::kDiv) {
      --depth;
    }
  }
}

void CompiledExpr::emit(const Node& n, std::span<const std::string> slots) {
  switch (n.kind) {
    case NodeKind::kNumber:
      code_.push_back({Op::kConst, 0, n.number, n.offset});
      return;
    case NodeKind::kVariable: {
      auto it = std::find(slots.begin(), slots.end(), n.name);
      if (it == slots.end()) throw UnboundVariableError(n.name);
      code_.push_back({Op::kSlot, static_cast<int>(it - slots.begin()), 0.0, n.offset});
      return;
    }
    case NodeKind::kNeg:
      emit(*n.lhs, slots);
      code_.push_back({Op::kNeg, 0, 0.0, n.offset});
      return;
    case NodeKind::kPow:
      emit(*n.lhs, slots);
      code_.push_back({Op::kPow, 0, n.number, n.offset});
      return;
    case NodeKind::kCall: {
      emit(*n.lhs, slots);
      static const Op ops[] = {Op::kExp, Op::kLn, Op::kSin, Op::kCos, Op::kSqrt};
      code_.push_back({ops[static_cast<int>(n.func)], 0, 0.0, n.offset});
      return;
    }
    default: {
      emit(*n.lhs, slots);
      emit(*n.rhs, slots);
      Op op = n.kind == NodeKind::kAdd   ? Op::kAdd
              : n.kind == NodeKind::kSub ? Op::kSub
              : n.kind == NodeKind::kMul ? Op::kMul
                                         : Op::kDiv;
      code_.push_back({op, 0, 0.0, n.offset});
      return;
    }
  }
}

bool CompiledExpr::uses_slot(int slot) const {
  return std::any_of(code_.begin(), code_.end(),
                     [&](const Instr& in) { return in.op == Op::kSlot && in.slot == slot; });
}

Jet CompiledExpr::operator()(std::span<const Jet> slots) const {
  return (*this)(slots, slots.empty() ? JetLayout::get(0, 0) : slots[0].layout());
}

Jet CompiledExpr::operator()(std::span<const Jet> slots, const JetLayout& layout) const {
  std::vector<Jet> st;
  st.reserve(max_depth_);
  for (const Instr& in : code_) {
    try {
      switch (in.op) {
        case Op::kConst: st.emplace_back(layout, in.num); break;
        case Op::kSlot: st.push_back(slots[in.slot]); break;
        case Op::kNeg: st.back() = -st.back(); break;
        case Op::kPow: st.back() = pow(st.back(), in.num); break;
        case Op::kExp: st.back() = exp(st.back()); break;
        case Op::kLn: st.back() = log(st.back()); break;
        case Op::kSin: st.back() = sin(st.back()); break;
        case Op::kCos: st.back() = cos(st.back()); break;
        case Op::kSqrt: st.back() = sqrt(st.back()); break;
        default: {
          Jet b = std::move(st.back());
          st.pop_back();
          Jet& a = st.back();
          if (in.op == Op::kAdd) a += b;
          else if (in.op == Op::kSub) a -= b;
          else if (in.op == Op::kMul) a = a * b;
          else a = a / b;
        }
      }
    } catch (const DomainError& e) {
      if (e.offset() >= 0 || in.offset < 0) throw;
      throw DomainError(e.what(), in.offset);
    }
  }
  return st.back();
}

double CompiledExpr::value(std::span<const double> slots) const {
  std::vector<double> st;
  st.reserve(max_depth_);
  auto domain = [](const char* what, const Instr& in) { throw DomainError(what, in.offset); };
  for (const Instr& in : code_) {
    if (in.op == Op::kConst) {
      st.push_back(in.num);
      continue;
    }
    if (in.op == Op::kSlot) {
      st.push_back(slots[in.slot]);
      continue;
    }
    double& top = st.back();
    switch (in.op) {
      case Op::kNeg: top = -top; break;
      case Op::kPow:
        if (top == 0.0 && in.num < 0.0) domain("negative power of zero", in);
        if (top < 0.0 && std::floor(in.num) != in.num) domain("fractional power of negative value", in);
        top = in.num == 2.0 ? top * top : std::pow(top, in.num);
        break;
      case Op::kExp: top = std::exp(top); break;
      case Op::kLn:
        if (!(top > 0.0)) domain("ln of non-positive value", in);
        top = std::log(top);
        break;
      case Op::kSin: top = std::sin(top); break;
      case Op::kCos: top = std::cos(top); break;
      case Op::kSqrt:
        if (!(top > 0.0)) domain("sqrt of non-positive value", in);
        top = std::sqrt(top);
        break;
      default: {
        const double b = st.back();
        st.pop_back();
        double& a = st.back();
        if (in.op == Op::kAdd) a += b;
        else if (in.op == Op::kSub) a -= b;
        else if (in.op == Op::kMul) a *= b;
        else {
          if (b == 0.0) domain("division by zero", in);
          a /= b;
        }
      }
    }
  }
  return st.back();
}

Jet evaluate(const Expr& expr, const Env& env) {
  std::vector<std::string> names;
  std::vector<Jet> values;
  for (const auto& [n, v] : env.bindings()) {
    names.push_back(n);
    values.push_back(v);
  }
  return CompiledExpr(expr, names)(values);
}

}  // namespace walkergeo
