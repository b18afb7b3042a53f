#include "walkergeo/catalog.h"

#include <Eigen/Sparse>
#include <cmath>

#include "walkergeo/errors.h"

namespace walkergeo {
namespace {

Expr var(const char* name) { return Expr::variable(name); }
Expr num(double x) { return Expr::number(x); }
Expr sq(const Expr& e) { return e * e; }

const std::vector<std::string> kCoords = {"u", "v"};
const std::vector<std::string> kAll = {"xp", "u", "v", "xm"};

// Metric data with H0 replaced, everything else kept.
WalkerExprs with_h0(const WalkerMetric& w, const Expr& H0) {
  WalkerExprs e = *w.exprs();
  e.H = e.H - substitute(e.H, "xp", num(0.0)) + H0;
  return e;
}

// h(A, A) for h = sigma delta.
Expr a_norm2(const WalkerMetric& w) {
  const WalkerExprs& e = *w.exprs();
  return (sq(e.A[0]) + sq(e.A[1])) / e.h[0];
}

std::shared_ptr<const ExprMap> map_uv(const Expr& u, const Expr& v) {
  return std::make_shared<ExprMap>(kAll, std::vector<Expr>{var("xp"), u, v, var("xm")});
}

// Hyperbolic and spherical examples: f given, H~0 = u v after the flow, H0 its
// pullback through the inverse closed-form map plus |A|^2_h.
struct SpaceFormSetup {
  HolomorphicPoly f;
  double lambda;
  Expr u_new_of_old, v_new_of_old;  // x~(x)
};

WalkerMetric space_form_input(const SpaceFormSetup& s) {
  const WalkerMetric bare = build_lewandowski(s.f, s.lambda, num(0.0));
  const Expr h0 = s.u_new_of_old * s.v_new_of_old + a_norm2(bare);
  return build_lewandowski(s.f, s.lambda, h0);
}

Box space_form_box(double lambda) {
  const double r = lambda < 0 ? 0.49 : 1.0;
  return Box{{{-1.0, 1.0}, {-r, r}, {-r, r}, {0.0, 1.0}}};
}

Box sample_box_of(const Box& box) {
  Box s = box.shrunk(0.5);
  s.bounds.front() = box.bounds.front();
  s.bounds.back() = box.bounds.back();
  return s;
}

ExampleBundle make_bundle(std::string name, double lambda, Box box, std::string flow, WalkerMetric input,
                          Provenance provenance) {
  Box sample = sample_box_of(box);
  return ExampleBundle{std::move(name), lambda, std::move(box), std::move(sample), 0.0, std::move(flow),
                       std::move(input), provenance, {}, {}, {}};
}

// b(x-) = int_0^x- c
Expr b_of(double c0, double c1) {
  const Expr t = var("xm");
  return c0 * t + (0.5 * c1) * t * t;
}

Expr c_of(double c0, double c1) { return c0 + c1 * var("xm"); }

// z(z~) = (z~ + i tau)/(1 - i z~ tau) in real form.
std::pair<Expr, Expr> mobius(const Expr& a, const Expr& b, const Expr& tau) {
  const Expr q = sq(1.0 + tau * b) + sq(tau) * sq(a);
  const Expr u = a * (1.0 - sq(tau)) / q;
  const Expr v = (tau * (sq(a) + sq(b)) + b * (1.0 + sq(tau)) + tau) / q;
  return {u, v};
}

std::pair<Expr, Expr> maple_example1(double lambda, const Expr& b, bool literal) {
  const Expr u = var("u"), v = var("v");
  const double L = lambda;
  const Expr k = literal ? sq(u) + sq(v) - 2.0 * sq(v) + 1.0 : sq(u) + sq(v) - 2.0 * v + 1.0;
  const Expr c1 = k * (L * L) / u;
  const Expr c2 = -4.0 * (sq(u) + sq(v) - 1.0) / (L * k);
  const Expr den = sq(c1) * sq(4.0 * exp(-0.5 * L * b) + L * c2) + 64.0 * std::pow(L, 4);
  const Expr uo = 64.0 * c1 * (L * L) / (den * exp(0.5 * L * b));
  const Expr vo = (-16.0 * sq(c1) * exp(-L * b) + sq(c1) * sq(c2) * (L * L) + 64.0 * std::pow(L, 4)) / den;
  return {uo, vo};
}

WalkerMetric transformed_space_form(double lambda) {
  return build_lewandowski(HolomorphicPoly{}, lambda, var("u") * var("v"));
}

ExampleBundle lewandowski_ex1() {
  const double lambda = -2.0;
  const Expr b = b_of(0.25, 0.25);
  const Expr c = c_of(0.25, 0.25);
  const Expr e = exp(0.5 * lambda * b);
  const Expr tau = (e - 1.0) / (e + 1.0);  // tanh(Lambda b / 4)
  const auto [un, vn] = mobius(var("u"), var("v"), -tau);
  SpaceFormSetup s{HolomorphicPoly{{{0.5 * c, num(0.0)}}}, lambda, un, vn};
  ExampleBundle out = make_bundle("lewandowski_ex1", lambda, space_form_box(lambda), "main", space_form_input(s),
                                  Provenance::kDerived);
  const auto [mu, mv] = mobius(var("u"), var("v"), tau);
  const auto [cu, cv] = maple_example1(lambda, b, false);
  const auto [lu, lv] = maple_example1(lambda, b, true);
  out.maps.push_back({"maple_corrected", map_uv(cu, cv), Provenance::kPaperCorrected,
                      "displayed general solution with c1, c2 built on u~^2 + (v~ - 1)^2"});
  out.maps.push_back({"maple_literal", map_uv(lu, lv), Provenance::kPaper,
                      "displayed general solution with c1, c2 exactly as printed"});
  out.maps.push_back({"mobius", map_uv(mu, mv), Provenance::kDerived,
                      "z = (z~ + i tau)/(1 - i z~ tau), tau = tanh(Lambda b / 4)"});
  out.transformed.push_back({"displayed", transformed_space_form(lambda), Provenance::kPaper,
                             "hyperbolic base, A = 0, H~0 = u v"});
  out.notes = {"c(x-) = (1 + x-)/4; f = c/2 matches the displayed flow equations, the displayed A "
                 "carries c in place of c/2",
               "H0 is not given; H~0 = u v is the suggested choice and H0 is its pullback plus |A|^2_h"};
  return out;
}

ExampleBundle rotation_example(const std::string& name, double lambda, double fsign) {
  const Expr b = b_of(1.0, 1.0);
  const Expr c = c_of(1.0, 1.0);
  const Expr th = (0.25 * lambda) * b;
  const Expr u = var("u"), v = var("v");
  // x(x~) and x~(x)
  Expr mu, mv, un, vn;
  if (lambda < 0) {
    mu = u * cos(th) + v * sin(th);
    mv = -u * sin(th) + v * cos(th);
    un = u * cos(th) - v * sin(th);
    vn = u * sin(th) + v * cos(th);
  } else {
    mu = u * cos(th) - v * sin(th);
    mv = u * sin(th) + v * cos(th);
    un = u * cos(th) + v * sin(th);
    vn = -u * sin(th) + v * cos(th);
  }
  SpaceFormSetup s{HolomorphicPoly{{{num(0.0), num(0.0)}, {(0.25 * fsign) * c, num(0.0)}}}, lambda,
                     un, vn};
  ExampleBundle out = make_bundle(name, lambda, space_form_box(lambda), "main", space_form_input(s),
                                  Provenance::kDerived);
  out.maps.push_back({"rotation", map_uv(mu, mv), Provenance::kPaper,
                      lambda < 0 ? "c1 = u~, c2 = v~" : "c1 = u~, c2 = -v~"});
  out.transformed.push_back({"displayed", transformed_space_form(lambda), Provenance::kPaper,
                             std::string(lambda < 0 ? "hyperbolic" : "spherical") + " base, A = 0, H~0 = u v"});
  out.notes = {"c(x-) = 1 + x-, f = " + std::string(fsign < 0 ? "-" : "") +
                   "z c / 4 reproduces the displayed A",
               "H0 is not given; H~0 = u v is the suggested choice and H0 is its pullback plus |A|^2_h"};
  return out;
}

Box flat_box() { return Box{{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}, {0.0, 1.0}}}; }

ExampleBundle kg_ex1() {
  const Expr u = var("u"), v = var("v"), t = var("xm"), xp = var("xp");
  KgMetric kg = build_kg(u * v, (pow(u, 4) - pow(v, 4)) / 12.0);
  ExampleBundle out = make_bundle("kg_ex1", 0.0, flat_box(), "kill_a", kg.metric,
                                  Provenance::kPaper);
  out.maps.push_back({"displayed", map_uv(u * exp(-v * t), v), Provenance::kPaper,
                      "inverse of u~ = u e^{v x-}"});
  const Expr e2 = exp(-2.0 * v * t);
  WalkerExprs ex;
  ex.h = {e2, -u * t * e2, -u * t * e2, 1.0 + sq(u) * sq(t) * e2};
  ex.A = {num(0.0), num(0.0)};
  ex.H = -v * xp - sq(u) * sq(v) * e2 - pow(v, 4) / 12.0 + pow(u, 4) * exp(-4.0 * t * v) / 12.0;
  out.transformed.push_back({"displayed", WalkerMetric::from_exprs(kCoords, ex, 0.0), Provenance::kPaper, ""});
  return out;
}

ExampleBundle kg_ex2() {
  const Expr u = var("u"), v = var("v"), t = var("xm"), xp = var("xp");
  KgMetric kg = build_kg(exp(u) * cos(v), -0.25 * (1.0 + 2.0 * v * sin(2.0 * v)) * exp(2.0 * u));
  ExampleBundle out = make_bundle("kg_ex2", 0.0, flat_box(), "kill_a", kg.metric,
                                  Provenance::kPaper);
  out.maps.push_back({"displayed", map_uv(-ln(exp(-u) + t * cos(v)), v), Provenance::kPaper,
                      "inverse of u~ = -ln(e^{-u} - x- cos v)"});
  const Expr D = 1.0 + t * exp(u) * cos(v);
  const Expr D2 = sq(D);
  WalkerExprs fixed;
  fixed.h = {1.0 / D2, t * exp(u) * sin(v) / D2, t * exp(u) * sin(v) / D2,
             (1.0 + 2.0 * t * exp(u) * cos(v) + sq(t) * exp(2.0 * u)) / D2};
  fixed.A = {num(0.0), num(0.0)};
  fixed.H = -xp * exp(u) * cos(v) / D -
            exp(2.0 * u) * (1.0 + 4.0 * sq(cos(v)) + 2.0 * v * sin(2.0 * v)) / (4.0 * D2);
  out.transformed.push_back({"corrected", WalkerMetric::from_exprs(kCoords, fixed, 0.0), Provenance::kDerived,
                             "pullback through the displayed map"});
  WalkerExprs lit;
  lit.h = {1.0 / D2, t * exp(u) * sin(v) / D2, t * exp(u) * sin(v) / D2, (1.0 + t * exp(u)) / D2};
  lit.A = {num(0.0), num(0.0)};
  lit.H = -(4.0 * xp * (t * sq(cos(v)) + exp(-u) * cos(v)) + 1.0 + 4.0 * sq(cos(v)) + 2.0 * v * sin(2.0 * v)) /
          (4.0 * D2);
  out.transformed.push_back({"displayed", WalkerMetric::from_exprs(kCoords, lit, 0.0), Provenance::kPaper,
                             "as printed; not Ricci-flat"});
  return out;
}

}  // namespace

HolomorphicPoly HolomorphicPoly::derivative() const {
  HolomorphicPoly d;
  for (std::size_t k = 1; k < coeffs.size(); ++k)
    d.coeffs.push_back({static_cast<double>(k) * coeffs[k].first, static_cast<double>(k) * coeffs[k].second});
  return d;
}

std::pair<Expr, Expr> HolomorphicPoly::real_parts() const {
  const Expr u = var("u"), v = var("v");
  Expr zr = num(1.0), zi = num(0.0);  // z^k
  Expr re = num(0.0), im = num(0.0);
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const auto& [a, b] = coeffs[k];
    for (const Expr* c : {&a, &b})
      for (const std::string& name : c->variables())
        if (name != "xm") throw PreconditionError("holomorphic coefficient references " + name);
    re = re + a * zr - b * zi;
    im = im + a * zi + b * zr;
    const Expr nr = zr * u - zi * v;
    zi = zr * v + zi * u;
    zr = nr;
  }
  return {re, im};
}

Expr space_form_factor(double lambda) {
  if (lambda == 0.0) throw ZeroLambdaError("space form factor needs Lambda != 0");
  const double eps = lambda > 0 ? 1.0 : -1.0;
  const Expr r2 = sq(var("u")) + sq(var("v"));
  return 4.0 / (std::abs(lambda) * sq(1.0 + eps * r2));
}

WalkerMetric build_lewandowski(const HolomorphicPoly& f, double lambda, const Expr& H0) {
  if (lambda == 0.0) throw ZeroLambdaError("the space-form family needs Lambda != 0");
  if (H0.references("xp")) throw PreconditionError("H0 depends on xp");
  const double eps = lambda > 0 ? 1.0 : -1.0;
  const Expr u = var("u"), v = var("v");
  const Expr r2 = sq(u) + sq(v);
  // d_z ln P0 = eps zbar / (1 + eps z zbar), so Re(f d_z ln P0) = eps Re(f zbar) / (1 + eps r^2)
  const auto [fr, fi] = f.real_parts();
  const Expr dr = f.derivative().real_parts().first;
  const Expr L = (2.0 * eps) * (fr * u + fi * v) / (1.0 + eps * r2) - dr;
  WalkerExprs e;
  const Expr s = space_form_factor(lambda);
  e.h = {s, num(0.0), num(0.0), s};
  // W = i d_z L gives Re W = d_v L / 2, Im W = d_u L / 2
  e.A = {diff(L, "v"), -diff(L, "u")};
  e.H = lambda * sq(var("xp")) + H0;
  return WalkerMetric::from_exprs(kCoords, std::move(e), lambda);
}

KgMetric build_kg(const Expr& A1, const Expr& H0) {
  if (A1.references("xp") || H0.references("xp")) throw PreconditionError("A1 and H0 must not depend on xp");
  WalkerExprs e;
  e.h = {num(1.0), num(0.0), num(0.0), num(1.0)};
  e.A = {A1, num(0.0)};
  const Expr du = diff(A1, "u"), dv = diff(A1, "v");
  const Expr duu = diff(du, "u");
  e.H = -du * var("xp") + H0;
  KgMetric out{WalkerMetric::from_exprs(kCoords, std::move(e), 0.0), duu + diff(dv, "v"),
               diff(diff(H0, "u"), "u") + diff(diff(H0, "v"), "v") - 2.0 * diff(du, "xm") + 2.0 * A1 * duu +
                   sq(du) - sq(dv)};
  return out;
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kPaper:
      return "paper";
    case Provenance::kPaperCorrected:
      return "paper_corrected";
    case Provenance::kDerived:
      return "derived";
  }
  return "";
}

const ClosedFormMap& ExampleBundle::map(std::string_view label) const {
  for (const auto& m : maps)
    if (m.label == label) return m;
  throw std::out_of_range("no closed-form map " + std::string(label) + " in " + name);
}

const ClosedFormMetric& ExampleBundle::metric(std::string_view label) const {
  for (const auto& m : transformed)
    if (m.label == label) return m;
  throw std::out_of_range("no closed-form metric " + std::string(label) + " in " + name);
}

const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names = {"lewandowski_ex1", "lewandowski_ex2", "lewandowski_ex3",
                                                 "kg_ex1", "kg_ex2"};
  return names;
}

ExampleBundle named_example(std::string_view name) {
  if (name == "lewandowski_ex1") return lewandowski_ex1();
  if (name == "lewandowski_ex2") return rotation_example("lewandowski_ex2", -2.0, -1.0);
  if (name == "lewandowski_ex3") return rotation_example("lewandowski_ex3", 1.0, 1.0);
  if (name == "kg_ex1") return kg_ex1();
  if (name == "kg_ex2") return kg_ex2();
  throw UnknownExampleError("unknown example '" + std::string(name) + "'");
}

double PoissonGrid::node_u(int i) const { return u.first + i * (u.second - u.first) / (m - 1); }
double PoissonGrid::node_v(int j) const { return v.first + j * (v.second - v.first) / (m - 1); }

PoissonGrid solve_h0_poisson(const WalkerMetric& w, double lambda, double xm, std::pair<double, double> u,
                             std::pair<double, double> v, int m) {
  if (w.n() != 2 || !w.exprs()) throw PreconditionError("Poisson helper needs an n = 2 metric given by expressions");
  if (m < 3) throw std::invalid_argument("Poisson grid needs at least 3 nodes per axis");
  const WalkerExprs& e = *w.exprs();
  if (!e.h[1].is_zero_literal() || !(e.h[0] == e.h[3]))
    throw PreconditionError("Poisson helper needs h = sigma (du^2 + dv^2)");
  const WalkerMetric w0 = WalkerMetric::from_exprs(w.coords(), with_h0(w, num(0.0)), w.lambda());
  const CompiledExpr sigma(e.h[0], std::vector<std::string>{"xp", "u", "v", "xm"});
  PoissonGrid g{u, v, m, std::vector<double>(m * m, 0.0)};
  const int k = m - 2;
  const double du = (u.second - u.first) / (m - 1), dv = (v.second - v.first) / (m - 1);
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs(k * k);
  auto id = [k](int i, int j) { return (i - 1) * k + (j - 1); };
  for (int i = 1; i <= k; ++i)
    for (int j = 1; j <= k; ++j) {
      const std::vector<double> p{0.0, g.node_u(i), g.node_v(j), xm};
      const double s = point_residuals(w0, lambda, p).eq4;
      rhs(id(i, j)) = -sigma.value(p) * s;
      trips.emplace_back(id(i, j), id(i, j), -2.0 / (du * du) - 2.0 / (dv * dv));
      if (i > 1) trips.emplace_back(id(i, j), id(i - 1, j), 1.0 / (du * du));
      if (i < k) trips.emplace_back(id(i, j), id(i + 1, j), 1.0 / (du * du));
      if (j > 1) trips.emplace_back(id(i, j), id(i, j - 1), 1.0 / (dv * dv));
      if (j < k) trips.emplace_back(id(i, j), id(i, j + 1), 1.0 / (dv * dv));
    }
  Eigen::SparseMatrix<double> M(k * k, k * k);
  M.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(-M);
  if (solver.info() != Eigen::Success) throw GridError("Poisson factorization failed");
  const Eigen::VectorXd x = solver.solve(-rhs);
  for (int i = 1; i <= k; ++i)
    for (int j = 1; j <= k; ++j) g.values[i * m + j] = x(id(i, j));
  return g;
}

}  // namespace walkergeo
