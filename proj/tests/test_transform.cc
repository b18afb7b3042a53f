#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "support.h"
#include "walkergeo/catalog.h"
#include "walkergeo/errors.h"
#include "walkergeo/transform.h"

namespace walkergeo {
namespace {

using testing::num;
using testing::var;

const std::vector<std::string> kUV{"u", "v"};

WalkerMetric make(const std::vector<std::string>& h, const std::vector<std::string>& A,
                  const std::string& H, std::optional<double> lambda = std::nullopt,
                  std::vector<std::pair<std::string, double>> params = {}) {
  WalkerExprs e;
  for (const auto& s : h) e.h.push_back(Expr::parse(s));
  for (const auto& s : A) e.A.push_back(Expr::parse(s));
  e.H = Expr::parse(H);
  e.params = std::move(params);
  return WalkerMetric::from_exprs(kUV, e, lambda);
}

std::vector<std::vector<double>> pts(const Box& b, int count = 50, std::uint64_t seed = 0) {
  return sample_points(b, count, seed);
}

// Spherical base with A != 0, h-dot != 0 and H1 != 0, obtained from an Einstein
// metric by a gauge change; used wherever a generic Einstein input is needed.
WalkerMetric generic_einstein() {
  const WalkerMetric base = build_lewandowski({}, 2.0, Expr::parse("u*v"));
  GaugeSpec g;
  g.phi = Expr::parse("0.1*u*xm + 0.05*v^2");
  g.psi = {Expr::parse("u + 0.1*xm*v"), Expr::parse("v - 0.05*xm*u^2")};
  return gauge_transform(base, g, pts(testing::unit_box(2, 0.5), 10));
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

Matrix full_metric_at(const WalkerMetric& w, std::span<const double> p) {
  return frame_data(*assemble_full(w), p).g;
}

TEST(Gauge, IdentityLeavesMetricUnchanged) {
  const WalkerMetric w = make({"1 + 0.1*u^2", "0.1*v", "0.1*v", "2"}, {"v*xm", "u"}, "xp^2 + u*v");
  GaugeSpec g;
  g.phi = num(0);
  g.psi = {var("u"), var("v")};
  const WalkerMetric t = gauge_transform(w, g);
  for (const auto& p : pts(testing::unit_box(2, 0.5), 10))
    EXPECT_LE(max_abs_diff(full_metric_at(t, p), full_metric_at(w, p)), 1e-14);
}

TEST(Gauge, MatchesPullbackOracle) {
  const WalkerMetric w = make({"1 + 0.1*u^2", "0.1*v", "0.1*v", "2 + sin(xm)"}, {"v*xm", "u"},
                              "-xp^2 + xp*u + u*v*xm");
  GaugeSpec g;
  g.phi = Expr::parse("0.2*u*v + 0.1*xm^2*u");
  g.psi = {Expr::parse("u + 0.1*xm*v"), Expr::parse("v + 0.05*u^2")};
  const auto box = testing::unit_box(2, 0.5);
  const WalkerMetric t = gauge_transform(w, g, pts(box, 10));
  const auto map = gauge_map(w, g);
  const auto full = assemble_full(w);
  for (const auto& p : pts(box, 50)) {
    const Matrix oracle = pullback_at(*full, *map, p);
    EXPECT_LE(max_abs_diff(full_metric_at(t, p), oracle), 1e-10);
  }
}

TEST(Gauge, RotationOfFlatSpaceIsFlat) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "0");
  GaugeSpec g;
  g.phi = num(0);
  g.psi = {Expr::parse("0.6*u - 0.8*v"), Expr::parse("0.8*u + 0.6*v")};
  const WalkerMetric t = gauge_transform(w, g);
  const auto p = pts(testing::unit_box(2), 10);
  EXPECT_LE(einstein_residual(t, 0.0, p).sup_residual, 1e-14);
  for (const auto& q : p) EXPECT_LE(max_abs_diff(full_metric_at(t, q), full_metric_at(w, q)), 1e-14);
}

TEST(Gauge, SingularJacobianRejected) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "0");
  GaugeSpec g;
  g.phi = num(0);
  g.psi = {Expr::parse("u + v"), Expr::parse("u + v")};
  EXPECT_THROW(gauge_transform(w, g, pts(testing::unit_box(2), 5)), PreconditionError);
}

TEST(PlusShift, ZeroIsIdentity) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"v", "0"}, "xp^2 + xp*u + v");
  const WalkerMetric t = plus_shift(w, num(0));
  for (const auto& p : pts(testing::unit_box(2), 10))
    EXPECT_LE(max_abs_diff(full_metric_at(t, p), full_metric_at(w, p)), 1e-15);
}

TEST(PlusShift, KillsH1) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "xp^2 + 2*u*xp + v", 1.0);
  const WalkerMetric t = plus_shift(w, Expr::parse("-u"));
  const auto p = pts(testing::unit_box(2), 20);
  EXPECT_LE(field_sups(t, p).H1, 1e-15);
  EXPECT_LE(field_sups(plus_shift_kill_h1(w, 1.0), p).H1, 1e-15);
  const std::vector<std::string> slots{"xp", "u", "v", "xm"};
  const std::vector<double> q{0.0, 0.4, 0.1, 0.2};
  EXPECT_NEAR(CompiledExpr(h1_kill_function(w, 1.0), slots).value(q), -0.4, 1e-15);
}

TEST(PlusShift, DisplayedReplacementRules) {
  // A + df, H1 + 2 Lambda f, H0 + H1 f + Lambda f^2 + 2 f-dot
  const double L = -1.5;
  const WalkerMetric w = make({"1 + u^2", "0", "0", "1"}, {"v*xm", "u"}, "-1.5*xp^2 + xp*sin(u) + v*xm", L);
  const Expr f = Expr::parse("u*v*xm");
  const WalkerMetric t = plus_shift(w, f);
  const std::vector<std::string> names{"xp", "u", "v", "xm"};
  for (const auto& p : pts(testing::unit_box(2), 10)) {
    const double u = p[1], v = p[2], m = p[3];
    const double fv = u * v * m, fdot = u * v, H1 = std::sin(u), H0 = v * m;
    const auto c = t.components(Jet::seed(p, 0));
    EXPECT_NEAR(c.A[0].value(), v * m + v * m, 1e-14);
    EXPECT_NEAR(c.A[1].value(), u + u * m, 1e-14);
    const double want = L * p[0] * p[0] + p[0] * (H1 + 2 * L * fv) + H0 + H1 * fv + L * fv * fv + 2 * fdot;
    EXPECT_NEAR(c.H.value(), want, 1e-13);
  }
}

TEST(PlusShift, EqualsGaugeTransform) {
  const WalkerMetric w = make({"1 + 0.2*u^2", "0", "0", "1"}, {"v*xm", "u"}, "2*xp^2 + xp*u + v", 2.0);
  const Expr f = Expr::parse("0.3*u*v + xm*v");
  GaugeSpec g;
  g.phi = -f;
  g.psi = {var("u"), var("v")};
  const WalkerMetric a = plus_shift(w, f), b = gauge_transform(w, g);
  for (const auto& p : pts(testing::unit_box(2), 20))
    EXPECT_LE(max_abs_diff(full_metric_at(a, p), full_metric_at(b, p)), 1e-10);
}

TEST(PlusShift, ZeroLambdaRejected) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "xp*u");
  EXPECT_THROW(plus_shift_kill_h1(w, 0.0), ZeroLambdaError);
}

TEST(KillA, ZeroAIsIdentity) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "u*v");
  const FlowResult r = kill_A_flow(w, 0.0, testing::unit_box(2));
  EXPECT_TRUE(r.map->identity());
  const std::vector<double> p{0.2, 0.3, -0.4, 0.7};
  EXPECT_LE(max_abs_diff(r.map->jacobian(p), Matrix::Identity(4, 4)), 0.0);
}

TEST(KillA, RicciFlatExample1ClosedForm) {
  const KgMetric kg = build_kg(Expr::parse("u*v"), Expr::parse("(u^4 - v^4)/12"));
  const Box box = testing::unit_box(2);
  const FlowResult r = kill_A_flow(kg.metric, 0.0, box);
  for (const auto& xt : pts(box.shrunk(0.5), 50)) {
    const auto x = r.map->to_original(xt);
    EXPECT_NEAR(x[1], xt[1] * std::exp(-xt[2] * xt[3]), 1e-9);
    EXPECT_NEAR(x[2], xt[2], 1e-15);
    // u~ = u e^{v x-}
    const auto back = r.map->to_new(x);
    EXPECT_NEAR(back[1], x[1] * std::exp(x[2] * x[3]), 1e-6);
  }
  EXPECT_LE(field_sups(r.transformed, pts(box.shrunk(0.5))).A, 1e-9);
}

Matrix matrix_exp(const Matrix& m) {
  Matrix out = Matrix::Identity(m.rows(), m.cols()), term = out;
  for (int k = 1; k < 40; ++k) {
    term = term * m / k;
    out += term;
  }
  return out;
}

TEST(KillA, LinearFieldMatchesMatrixExponential) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.8, 0.8);
  for (int t = 0; t < 3; ++t) {
    Matrix M(2, 2);
    for (int i = 0; i < 4; ++i) M(i / 2, i % 2) = d(rng);
    auto lin = [&](int i) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g*u + %.17g*v", M(i, 0), M(i, 1));
      return std::string(buf);
    };
    const WalkerMetric w = make({"1", "0", "0", "1"}, {lin(0), lin(1)}, "0");
    const Box box{{{-1, 1}, {-3, 3}, {-3, 3}, {0, 1}}};
    const FlowResult r = kill_A_flow(w, 0.0, box);
    for (const auto& xt : pts(Box{{{-1, 1}, {-0.5, 0.5}, {-0.5, 0.5}, {0, 1}}}, 10, t)) {
      const Vector y0 = Vector{{xt[1], xt[2]}};
      const Vector y = matrix_exp(-M * xt[3]) * y0;
      const auto x = r.map->to_original(xt);
      EXPECT_NEAR(x[1], y[0], 1e-8);
      EXPECT_NEAR(x[2], y[1], 1e-8);
      const Matrix J = r.map->jacobian(xt);
      const Matrix E = matrix_exp(-M * xt[3]);
      EXPECT_LE(max_abs_diff(J.block(1, 1, 2, 2), E), 1e-8);
    }
  }
}

TEST(KillA, EscapingFlowReported) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"-5", "0"}, "0");
  const Box box = testing::unit_box(2);
  auto run = [&] {
    const FlowResult r = kill_A_flow(w, 0.0, box);
    const std::vector<double> xt{0, 0.9, 0, 1.0};
    r.map->to_original(xt);
  };
  EXPECT_THROW(run(), FlowError);
}

TEST(Flow, InverseRoundTripAndBaseSlice) {
  const WalkerMetric w = generic_einstein();
  const Box box = testing::unit_box(2, 0.5);
  const FlowResult r = main_theorem_flow(w, 2.0, 0.0, box);
  const double tol = 10 * r.map->settings().agreement;
  for (const auto& xt : pts(box.shrunk(0.5), 100)) {
    const auto x = r.map->to_original(xt);
    const auto back = r.map->to_new(x);
    for (int a = 0; a < 4; ++a) EXPECT_NEAR(back[a], xt[a], tol);
  }
  std::vector<double> b{0.1, 0.2, -0.1, 0.0};
  const Matrix J = r.map->jacobian(b);
  EXPECT_LE(max_abs_diff(J.block(1, 1, 2, 2), Matrix::Identity(2, 2)), 1e-14);
}

TEST(Flow, TransformationsPreserveEinstein) {
  const WalkerMetric w = generic_einstein();
  const Box box = testing::unit_box(2, 0.5);
  const auto p = pts(box.shrunk(0.5), 30);
  const double before = einstein_residual(w, 2.0, p).sup_residual;
  const FlowResult k = kill_A_flow(w, 0.0, box);
  const FlowResult m = main_theorem_flow(w, 2.0, 0.0, box);
  const double tol = 10 * k.map->settings().agreement;
  EXPECT_LE(before, 1e-12);
  EXPECT_LE(einstein_residual(k.transformed, 2.0, p).sup_residual, before + tol);
  EXPECT_LE(einstein_residual(m.transformed, 2.0, p).sup_residual, before + tol);
  EXPECT_LE(field_sups(k.transformed, p).A, tol);
}

TEST(MainFlow, PostConditions) {
  const WalkerMetric w = generic_einstein();
  const Box box = testing::unit_box(2, 0.5);
  const auto p = pts(box.shrunk(0.5), 30);
  const FlowResult r = main_theorem_flow(w, 2.0, 0.0, box);
  const FieldSups s = field_sups(r.transformed, p);
  const double tol = 10 * r.map->settings().agreement;
  EXPECT_LE(s.A, tol);
  EXPECT_LE(s.H1, tol);
  for (const auto& q : residuals_main(r.transformed, 2.0, p)) EXPECT_TRUE(q.pass) << q.equation_id;
}

TEST(MainFlow, AlreadyInFormIsIdentity) {
  const WalkerMetric w = build_lewandowski({}, -1.0, Expr::parse("u*v"));
  const FlowResult r = main_theorem_flow(w, -1.0, 0.0, testing::unit_box(2, 0.49));
  EXPECT_TRUE(r.map->identity());
}

TEST(MainFlow, Preconditions) {
  const WalkerMetric flat = make({"1", "0", "0", "1"}, {"v", "0"}, "u");
  EXPECT_THROW(main_theorem_flow(flat, 0.0, 0.0, testing::unit_box(2)), ZeroLambdaError);
  const WalkerMetric wrong = make({"1", "0", "0", "1"}, {"v", "0"}, "3*xp^2");
  EXPECT_THROW(main_theorem_flow(wrong, 1.0, 0.0, testing::unit_box(2)), ProfileError);
}

void expect_flow_matches(const std::string& name, const std::string& label, double tol) {
  const ExampleBundle b = named_example(name);
  const FlowResult r = main_theorem_flow(b.input, b.lambda, b.base_slice, b.box);
  const auto& ref = b.map(label);
  for (const auto& xt : pts(b.sample_box, 20)) {
    const auto x = r.map->to_original(xt);
    const auto want = ref.map->to_original(xt);
    for (int a = 1; a < 3; ++a) EXPECT_NEAR(x[a], want[a], tol) << name << " " << label;
  }
}

TEST(MainFlow, Example2Rotation) { expect_flow_matches("lewandowski_ex2", "rotation", 1e-6); }
TEST(MainFlow, Example3Rotation) { expect_flow_matches("lewandowski_ex3", "rotation", 1e-6); }
TEST(MainFlow, Example1CorrectedClosedForm) {
  expect_flow_matches("lewandowski_ex1", "maple_corrected", 1e-6);
  expect_flow_matches("lewandowski_ex1", "mobius", 1e-6);
}

TEST(MainFlow, Example1LiteralClosedFormDisagrees) {
  const ExampleBundle b = named_example("lewandowski_ex1");
  const FlowResult r = main_theorem_flow(b.input, b.lambda, b.base_slice, b.box);
  double worst = 0;
  for (const auto& xt : pts(b.sample_box, 20)) {
    const auto x = r.map->to_original(xt);
    const auto lit = b.map("maple_literal").map->to_original(xt);
    worst = std::max({worst, std::abs(x[1] - lit[1]), std::abs(x[2] - lit[2])});
  }
  EXPECT_GT(worst, 1e-2);
}

TEST(Theorem1Flow, ZeroPhiIsKillA) {
  const WalkerMetric w = generic_einstein();
  const Box box = testing::unit_box(2, 0.5);
  const FlowResult a = kill_A_flow(w, 0.0, box), b = theorem1_flow(w, num(0), 0.0, box);
  for (const auto& xt : pts(box.shrunk(0.5), 10)) {
    const auto xa = a.map->to_original(xt), xb = b.map->to_original(xt);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(xa[i], xb[i], 1e-12);
  }
}

TEST(Theorem1Flow, KillsBWithNonzeroPhi) {
  const WalkerMetric w = make({"1 + 0.2*u^2", "0", "0", "1 + 0.1*xm"}, {"0", "0"}, "xp*u + v", 0.0);
  const Box box = testing::unit_box(2);
  const Expr phi = Expr::parse("0.3*u*v + 0.2*xm*u");
  const FlowResult r = theorem1_flow(w, phi, 0.0, box);
  const auto p = pts(box.shrunk(0.5), 30);
  EXPECT_LE(field_sups(r.transformed, p).A, 1e-8);
  // psi = x~(x) is constant along each characteristic
  for (const auto& xt : pts(box.shrunk(0.5), 10)) {
    for (double t : {0.25, 0.5, 0.75}) {
      std::vector<double> q = xt;
      q[3] = t;
      const auto x = r.map->to_original(q);
      const auto back = r.map->to_new(x);
      EXPECT_NEAR(back[1], xt[1], 1e-8);
      EXPECT_NEAR(back[2], xt[2], 1e-8);
    }
  }
}

TEST(Theorem2Phi, ZeroDataStaysZero) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "xp^2", 1.0);
  const Theorem2Result r = theorem2_phi(w, 1.0, 0.0, testing::unit_box(2));
  for (std::size_t k = 0; k < r.phi.levels().size(); ++k)
    for (double x : r.phi.level(k)) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(r.sup_h0_tilde, 0.0);
}

TEST(Theorem2Phi, ConstantH0IsExact) {
  const double eps = 0.25;
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "0.25", 0.0);
  const Theorem2Result r = theorem2_phi(w, 0.0, 0.0, testing::unit_box(2));
  for (std::size_t k = 0; k < r.phi.levels().size(); ++k)
    for (double x : r.phi.level(k)) EXPECT_NEAR(x, 0.5 * eps * r.phi.levels()[k], 1e-14);
  EXPECT_LE(r.sup_h0_tilde, 1e-9);
}

WalkerMetric theorem2_instance() {
  return make({"4/(L*(1+u^2+v^2)^2)", "0", "0", "4/(L*(1+u^2+v^2)^2)"}, {"0", "0"},
              "L*xp^2 + xp*u*xm + u*v + 0.3*xm", 2.0, {{"L", 2.0}});
}

Box theorem2_box() { return Box{{{-1, 1}, {-0.6, 0.6}, {-0.6, 0.6}, {0, 0.4}}}; }

TEST(Theorem2Phi, SecondOrderConvergence) {
  const WalkerMetric w = theorem2_instance();
  std::vector<double> sups;
  for (double d : {0.1, 0.05, 0.025}) {
    Theorem2Settings s;
    s.delta = d;
    s.tau = d / 2;
    sups.push_back(theorem2_phi(w, 2.0, 0.0, theorem2_box(), s).sup_h0_tilde);
  }
  EXPECT_GE(sups[0] / sups[1], 3.5);
  EXPECT_GE(sups[1] / sups[2], 3.5);
}

TEST(Theorem2Phi, RichardsonGate) {
  const WalkerMetric w = theorem2_instance();
  Theorem2Settings s;
  s.delta = 0.1;
  s.tau = 0.05;
  s.richardson_tol = 1e-9;
  EXPECT_THROW(theorem2_phi(w, 2.0, 0.0, theorem2_box(), s), GridError);
  s.richardson_tol = 1e-2;
  const Theorem2Result r = theorem2_phi(w, 2.0, 0.0, theorem2_box(), s);
  ASSERT_TRUE(r.richardson_estimate.has_value());
  EXPECT_GT(*r.richardson_estimate, 0.0);
}

TEST(Theorem2Phi, BlowUpReported) {
  // phi' = (1 + phi^2)/2 blows up at x- = pi
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"0", "0"}, "xp^2 + 1", 1.0);
  const Box box{{{-1, 1}, {-1, 1}, {-1, 1}, {0, 4}}};
  EXPECT_THROW(theorem2_phi(w, 1.0, 0.0, box), GridError);
}

TEST(Theorem2Phi, RequiresAZero) {
  const WalkerMetric w = make({"1", "0", "0", "1"}, {"v", "0"}, "u");
  EXPECT_THROW(theorem2_phi(w, 0.0, 0.0, testing::unit_box(2)), PreconditionError);
}

TEST(GridFunction, ReproducesCubicsExactly) {
  GridFunction g({{-1, 1}, {-1, 1}}, {11, 11}, {0.0, 0.1, 0.2, 0.3});
  for (int k = 0; k < 4; ++k) {
    const double t = g.levels()[k];
    for (int i = 0; i < g.nodes(); ++i) {
      const auto x = g.node(i);
      g.level(k)[i] = x[0] * x[0] * x[0] - 2 * x[0] * x[1] + t * t * x[1];
    }
  }
  const std::vector<double> p{0.337, -0.512};
  const double t = 0.17;
  EXPECT_NEAR(g.value(p, t), p[0] * p[0] * p[0] - 2 * p[0] * p[1] + t * t * p[1], 1e-13);
  EXPECT_NEAR(g.time_derivative(p, t), 2 * t * p[1], 1e-12);
}

}  // namespace
}  // namespace walkergeo
