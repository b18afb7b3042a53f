#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "walkergeo/catalog.h"
#include "walkergeo/expr.h"
#include "walkergeo/geometry.h"
#include "walkergeo/jet.h"
#include "walkergeo/walker.h"

namespace walkergeo::testing {

using RealFn = std::function<double(const std::vector<double>&)>;

// Central differences, step h.
inline std::vector<double> fd_gradient(const RealFn& f, std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline std::vector<std::vector<double>> fd_hessian(const RealFn& f, std::vector<double> x,
                                                   double h = 1e-4) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> H(n, std::vector<double>(n));
  const double f0 = f(x);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    H[i][i] = (fp - 2 * f0 + fm) / (h * h);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double xj = x[j];
      double s = 0;
      for (int a : {1, -1})
        for (int b : {1, -1}) {
          x[i] = xi + a * h;
          x[j] = xj + b * h;
          s += a * b * f(x);
        }
      x[i] = xi;
      x[j] = xj;
      H[i][j] = H[j][i] = s / (4 * h * h);
    }
  }
  return H;
}

// |a - b| <= rel * max(|a|, |b|) + abs
inline bool close(double a, double b, double rel, double abs) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs;
}

// Random smooth expression in the given variables. Every function argument is
// kept inside its domain: ln and sqrt act on 1.5 + sin(.) or 1 + (.)^2, and
// divisors are 2 + cos(.).
class ExprGen {
 public:
  ExprGen(std::vector<std::string> vars, std::uint64_t seed) : vars_(std::move(vars)), rng_(seed) {}

  std::string operator()(int depth = 3) { return gen(depth); }

 private:
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  std::string coef() {
    const double c = std::uniform_real_distribution<double>(0.2, 1.5)(rng_);
    return std::to_string(c);
  }

  std::string gen(int depth) {
    if (depth == 0 || pick(5) == 0) {
      if (pick(3) == 0) return coef();
      return vars_[pick(static_cast<int>(vars_.size()))];
    }
    const std::string a = gen(depth - 1);
    switch (pick(10)) {
      case 0: return "(" + a + " + " + gen(depth - 1) + ")";
      case 1: return "(" + a + " - " + gen(depth - 1) + ")";
      case 2: return "(" + a + ")*(" + gen(depth - 1) + ")";
      case 3: return "(" + a + ")/(2 + cos(" + gen(depth - 1) + "))";
      case 4: return "exp(0.5*sin(" + a + "))";
      case 5: return "ln(1.5 + sin(" + a + "))";
      case 6: return "sqrt(1 + (" + a + ")^2)";
      case 7: return "sin(" + a + ")";
      case 8: return "cos(" + a + ")";
      default: return "(" + a + ")^" + std::to_string(2 + pick(2));
    }
  }

  std::vector<std::string> vars_;
  std::mt19937_64 rng_;
};

inline Expr num(double x) { return Expr::number(x); }
inline Expr var(const std::string& s) { return Expr::variable(s); }

// Same metric with H replaced by H + extra (expression data required).
inline WalkerMetric add_to_h(const WalkerMetric& w, const Expr& extra) {
  WalkerExprs e = *w.exprs();
  e.H = e.H + extra;
  return WalkerMetric::from_exprs(w.coords(), e, w.lambda());
}

struct CatalogMetric {
  std::string label;
  WalkerMetric metric;
  double lambda;
  Box box;
};

// Inputs and reference transformed metrics of every catalog example.
inline std::vector<CatalogMetric> catalog_einstein_metrics() {
  std::vector<CatalogMetric> out;
  for (const auto& name : example_names()) {
    const ExampleBundle b = named_example(name);
    out.push_back({name + ".input", b.input, b.lambda, b.sample_box});
    out.push_back({name + "." + b.transformed.front().label, b.transformed.front().metric, b.lambda,
                   b.sample_box});
  }
  return out;
}

inline Box unit_box(int n, double r = 1.0) {
  Box b;
  b.bounds.push_back({-1.0, 1.0});
  for (int i = 0; i < n; ++i) b.bounds.push_back({-r, r});
  b.bounds.push_back({0.0, 1.0});
  return b;
}

}  // namespace walkergeo::testing
