#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.h"
#include "walkergeo/errors.h"
#include "walkergeo/expr.h"

namespace walkergeo {
namespace {

const Node& lhs(const Node& n) { return *n.lhs; }
const Node& rhs(const Node& n) { return *n.rhs; }

TEST(Parse, SumOfSquares) {
  const Expr e = Expr::parse("u^2+v^2");
  const Node& r = e.root();
  ASSERT_EQ(r.kind, NodeKind::kAdd);
  ASSERT_EQ(lhs(r).kind, NodeKind::kPow);
  EXPECT_EQ(lhs(r).number, 2.0);
  EXPECT_EQ(lhs(lhs(r)).name, "u");
  ASSERT_EQ(rhs(r).kind, NodeKind::kPow);
  EXPECT_EQ(lhs(rhs(r)).name, "v");
}

TEST(Parse, CallsAndProduct) {
  const Expr e = Expr::parse("exp(u)*cos(v)");
  const Node& r = e.root();
  ASSERT_EQ(r.kind, NodeKind::kMul);
  ASSERT_EQ(lhs(r).kind, NodeKind::kCall);
  EXPECT_EQ(lhs(r).func, Func::kExp);
  ASSERT_EQ(rhs(r).kind, NodeKind::kCall);
  EXPECT_EQ(rhs(r).func, Func::kCos);
  EXPECT_EQ(lhs(rhs(r)).name, "v");
}

TEST(Parse, Precedence) {
  // -u^2 is -(u^2); a-b-c is (a-b)-c; a/b*c is (a/b)*c
  const Expr neg = Expr::parse("-u^2");
  ASSERT_EQ(neg.root().kind, NodeKind::kNeg);
  EXPECT_EQ(lhs(neg.root()).kind, NodeKind::kPow);

  const Expr sub = Expr::parse("a - b - c");
  ASSERT_EQ(sub.root().kind, NodeKind::kSub);
  EXPECT_EQ(rhs(sub.root()).name, "c");
  EXPECT_EQ(lhs(sub.root()).kind, NodeKind::kSub);

  const Expr md = Expr::parse("a/b*c");
  ASSERT_EQ(md.root().kind, NodeKind::kMul);
  EXPECT_EQ(lhs(md.root()).kind, NodeKind::kDiv);

  const Expr sum = Expr::parse("1 + 2*x");
  ASSERT_EQ(sum.root().kind, NodeKind::kAdd);
  EXPECT_EQ(rhs(sum.root()).kind, NodeKind::kMul);
}

TEST(Parse, WhitespaceIsInsignificant) {
  EXPECT_EQ(Expr::parse(" u ^ 2 +\tv "), Expr::parse("u^2+v"));
}

TEST(Parse, SyntaxErrorOffset) {
  try {
    Expr::parse("1+*2");
    FAIL() << "expected a syntax error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(Parse, RejectsMalformedInput) {
  for (const char* s : {"", "2u", "u^v", "u^(v)", "(u", "u)", "foo(u)", "exp u", "1..2", "u v",
                        "3 $ 4"}) {
    EXPECT_THROW(Expr::parse(s), ParseError) << s;
  }
}

TEST(Parse, ConstantExponents) {
  EXPECT_EQ(Expr::parse("u^-2").root().number, -2.0);
  EXPECT_EQ(Expr::parse("u^(-0.5)").root().number, -0.5);
  EXPECT_EQ(Expr::parse("u^1.5e0").root().number, 1.5);
}

TEST(Parse, PrintRoundTrip) {
  testing::ExprGen gen({"u", "v", "xm"}, 3);
  for (int t = 0; t < 200; ++t) {
    const Expr e = Expr::parse(gen(4));
    const std::string once = e.to_string();
    const Expr again = Expr::parse(once);
    EXPECT_EQ(again, e) << once;
    EXPECT_EQ(again.to_string(), once);
  }
}

TEST(Eval, Polynomial) {
  Env env;
  const std::vector<double> p{1.0, 2.0};
  const auto x = Jet::seed(p, 2);
  env.bind("u", x[0]);
  env.bind("v", x[1]);
  const Jet j = evaluate(Expr::parse("u^2+v^2"), env);
  EXPECT_EQ(j.value(), 5.0);
  EXPECT_EQ(j.gradient(0), 2.0);
  EXPECT_EQ(j.gradient(1), 4.0);
  EXPECT_EQ(j.hessian(0, 0), 2.0);
  EXPECT_EQ(j.hessian(1, 1), 2.0);
  EXPECT_EQ(j.hessian(0, 1), 0.0);
}

TEST(Eval, InactiveBinding) {
  Env env;
  env.bind("u", Jet::variable(2, 2, 0, 0.1));
  env.bind("xm", Jet::constant(2, 2, 0.7));
  const Jet j = evaluate(Expr::parse("xm"), env);
  EXPECT_EQ(j.value(), 0.7);
  EXPECT_TRUE(j.is_constant());
}

TEST(Eval, UnboundVariableNamesIt) {
  Env env;
  env.bind("u", Jet::variable(1, 2, 0, 0.1));
  try {
    evaluate(Expr::parse("u + w"), env);
    FAIL();
  } catch (const UnboundVariableError& e) {
    EXPECT_EQ(e.name(), "w");
  }
  const std::vector<std::string> slots{"u"};
  EXPECT_THROW(CompiledExpr(Expr::parse("u*zz"), slots), UnboundVariableError);
}

TEST(Eval, DomainErrorCarriesLocation) {
  const std::vector<std::string> slots{"u"};
  const CompiledExpr e(Expr::parse("1 + ln(u)"), slots);
  const std::vector<double> bad{-1.0};
  try {
    e.value(bad);
    FAIL();
  } catch (const DomainError& err) {
    EXPECT_EQ(err.offset(), 4);
  }
  EXPECT_THROW(e(Jet::seed(bad, 2)), DomainError);
}

TEST(Eval, DuplicateBindingRejected) {
  Env env;
  env.bind("u", Jet::constant(1, 2, 1.0));
  EXPECT_THROW(env.bind("u", Jet::constant(1, 2, 2.0)), std::invalid_argument);
}

TEST(Eval, ConformalFactorAgainstFiniteDifferences) {
  const std::vector<std::string> slots{"u", "v", "L"};
  const CompiledExpr e(Expr::parse("4/(-L*(1-u^2-v^2)^2)"), slots);
  const std::vector<double> p{0.3, 0.1};
  const auto x = Jet::seed(p, 2);
  const std::vector<Jet> in{x[0], x[1], Jet::constant(2, 2, -2.0)};
  const Jet j = e(in);
  const testing::RealFn f = [&](const std::vector<double>& q) {
    const std::vector<double> s{q[0], q[1], -2.0};
    return e.value(s);
  };
  EXPECT_NEAR(j.value(), 4.0 / (2.0 * std::pow(1 - 0.09 - 0.01, 2)), 1e-14);
  const auto g = testing::fd_gradient(f, p);
  const auto H = testing::fd_hessian(f, p);
  for (int i = 0; i < 2; ++i) {
    EXPECT_PRED4(testing::close, j.gradient(i), g[i], 1e-6, 1e-9);
    for (int k = 0; k < 2; ++k) EXPECT_PRED4(testing::close, j.hessian(i, k), H[i][k], 1e-6, 1e-7);
  }
}

TEST(Eval, InterpreterAndCompiledAgree) {
  testing::ExprGen gen({"u", "v"}, 11);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-1, 1);
  const std::vector<std::string> slots{"u", "v"};
  for (int t = 0; t < 50; ++t) {
    const Expr e = Expr::parse(gen());
    const std::vector<double> p{d(rng), d(rng)};
    const auto x = Jet::seed(p, 2);
    Env env;
    env.bind("u", x[0]);
    env.bind("v", x[1]);
    const Jet a = evaluate(e, env);
    const Jet b = CompiledExpr(e, slots)(x);
    for (int k = 0; k < a.size(); ++k) EXPECT_NEAR(a.coeff(k), b.coeff(k), 1e-12);
  }
}

TEST(Eval, LinearityAndProductRule) {
  const std::vector<std::string> slots{"u", "v"};
  const Expr a = Expr::parse("sin(u)*v");
  const Expr b = Expr::parse("exp(u - v)");
  const std::vector<double> p{0.2, -0.4};
  const auto x = Jet::seed(p, 2);
  const Jet ja = CompiledExpr(a, slots)(x), jb = CompiledExpr(b, slots)(x);
  const Jet sum = CompiledExpr(a + b, slots)(x), prod = CompiledExpr(a * b, slots)(x);
  const Jet ref_sum = ja + jb, ref_prod = ja * jb;
  for (int k = 0; k < sum.size(); ++k) {
    EXPECT_NEAR(sum.coeff(k), ref_sum.coeff(k), 1e-15);
    EXPECT_NEAR(prod.coeff(k), ref_prod.coeff(k), 1e-15);
  }
}

TEST(Symbolic, DiffAgainstJets) {
  testing::ExprGen gen({"u", "v"}, 17);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1, 1);
  const std::vector<std::string> slots{"u", "v"};
  for (int t = 0; t < 50; ++t) {
    const Expr e = Expr::parse(gen());
    const std::vector<double> p{d(rng), d(rng)};
    const Jet j = CompiledExpr(e, slots)(Jet::seed(p, 1));
    EXPECT_NEAR(CompiledExpr(diff(e, "u"), slots).value(p), j.gradient(0), 1e-11);
    EXPECT_NEAR(CompiledExpr(diff(e, "v"), slots).value(p), j.gradient(1), 1e-11);
  }
}

TEST(Symbolic, SubstituteAndReferences) {
  const Expr e = substitute(Expr::parse("u*v + u"), "u", Expr::parse("xm^2"));
  EXPECT_FALSE(e.references("u"));
  EXPECT_TRUE(e.references("xm"));
  EXPECT_EQ(e.variables(), (std::set<std::string>{"v", "xm"}));
  EXPECT_TRUE(Expr::parse("-0").is_zero_literal());
  EXPECT_FALSE(Expr::parse("u - u").is_zero_literal());
}

}  // namespace
}  // namespace walkergeo
