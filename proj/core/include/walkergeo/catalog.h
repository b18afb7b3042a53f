#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "walkergeo/expr.h"
#include "walkergeo/sampling.h"
#include "walkergeo/transform.h"
#include "walkergeo/walker.h"

namespace walkergeo {

// f(z, x-) = sum_k c_k(x-) z^k, each c_k given as (Re, Im) expressions in xm.
struct HolomorphicPoly {
  std::vector<std::pair<Expr, Expr>> coeffs;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
  HolomorphicPoly derivative() const;
  // Real and imaginary parts as expressions in u, v, xm.
  std::pair<Expr, Expr> real_parts() const;
};

// 4 / (|Lambda| (1 + sign(Lambda) (u^2 + v^2))^2), the conformal factor of h.
Expr space_form_factor(double lambda);

// Space-form family over (u, v): h = (2/P^2) dz dzbar, A_i dx^i = W dz + Wbar dzbar
// with W = i d_z L, L = 2 Re(f d_z ln P0 - d_z f / 2), H = Lambda xp^2 + H0.
WalkerMetric build_lewandowski(const HolomorphicPoly& f, double lambda, const Expr& H0);

struct KgMetric {
  WalkerMetric metric;
  Expr a10;  // d_u^2 A1 + d_v^2 A1
  Expr h00;  // Laplacian H0 - 2 d_- d_u A1 + 2 A1 d_u^2 A1 + (d_u A1)^2 - (d_v A1)^2
};
// h = du^2 + dv^2, A = (A1, 0), H = -(d_u A1) xp + H0; Lambda = 0.
KgMetric build_kg(const Expr& A1, const Expr& H0);

enum class Provenance { kPaper, kPaperCorrected, kDerived };
const char* provenance_name(Provenance p);

struct ClosedFormMap {
  std::string label;
  std::shared_ptr<const ExprMap> map;  // x(x~) over (xp, u, v, xm)
  Provenance provenance;
  std::string note;
};

struct ClosedFormMetric {
  std::string label;
  WalkerMetric metric;
  Provenance provenance;
  std::string note;
};

struct ExampleBundle {
  std::string name;
  double lambda = 0.0;
  Box box;                  // (xp, u, v, xm)
  Box sample_box;           // spatial half-box, full x+ and x- ranges
  double base_slice = 0.0;
  std::string flow;         // "kill_a" or "main"
  WalkerMetric input;
  Provenance input_provenance = Provenance::kPaper;
  std::vector<ClosedFormMap> maps;             // reference form first
  std::vector<ClosedFormMetric> transformed;   // reference form first
  std::vector<std::string> notes;

  const ClosedFormMap& map(std::string_view label) const;
  const ClosedFormMetric& metric(std::string_view label) const;
};

const std::vector<std::string>& example_names();
// Throws UnknownExampleError.
ExampleBundle named_example(std::string_view name);

struct PoissonGrid {
  std::pair<double, double> u, v;
  int m = 0;  // nodes per axis
  std::vector<double> values;  // row-major, u slowest

  double node_u(int i) const;
  double node_v(int j) const;
  double at(int i, int j) const { return values[i * m + j]; }
};

// One x- slice of eq4.8 for a conformally flat n = 2 metric h = sigma (du^2 + dv^2):
// solves (d_u^2 + d_v^2) H0 = -sigma S, S being eq4.8 with the x+-free part of H
// removed, with H0 = 0 on the boundary (five-point stencil).
PoissonGrid solve_h0_poisson(const WalkerMetric& w, double lambda, double xm,
                             std::pair<double, double> u, std::pair<double, double> v, int m);

}  // namespace walkergeo
