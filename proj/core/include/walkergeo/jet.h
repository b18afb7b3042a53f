#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

namespace walkergeo {

// Monomial table for truncated Taylor polynomials in `dim` variables up to
// total degree `order`. Index 0 is the constant term and indices 1..dim are
// the linear monomials x_0..x_{dim-1}. Layouts are interned and never freed.
class JetLayout {
 public:
  static constexpr int kMaxDim = 16;
  static constexpr int kMaxOrder = 15;

  static const JetLayout& get(int dim, int order);

  int dim() const { return dim_; }
  int order() const { return order_; }
  int size() const { return size_; }
  int degree(int k) const { return degree_[k]; }
  int exponent(int k, int var) const { return exponents_[k * dim_ + var]; }
  // -1 when the monomial is not in the table.
  int index_of(std::span<const int> exps) const;

  // c[k] += a[i] * b[j] over these triples gives the truncated product.
  const std::vector<int>& mul_i() const { return mul_i_; }
  const std::vector<int>& mul_j() const { return mul_j_; }
  const std::vector<int>& mul_k() const { return mul_k_; }

 private:
  JetLayout(int dim, int order);

  int dim_;
  int order_;
  int size_ = 0;
  std::vector<std::uint8_t> exponents_;
  std::vector<int> degree_;
  std::unordered_map<std::uint64_t, int> index_;
  std::vector<int> mul_i_, mul_j_, mul_k_;
};

// Truncated multivariate Taylor polynomial. Coefficient k holds
// d^alpha f / alpha! for the monomial alpha = exponents of k, so value,
// gradient and Hessian are read off the degree <= 2 part. Order 2 gives the
// classic value/gradient/Hessian jet; higher orders are used where maps have
// to be differentiated more than twice.
class Jet {
 public:
  Jet();
  explicit Jet(const JetLayout& layout, double value = 0.0);

  static Jet constant(int dim, int order, double value);
  static Jet variable(int dim, int order, int index, double value);
  // One active jet per coordinate of `point`.
  static std::vector<Jet> seed(std::span<const double> point, int order);
  // Single seeded coordinate; index must be in [0, point.size()).
  static Jet seed(std::span<const double> point, int index, int order);

  const JetLayout& layout() const { return *layout_; }
  int dim() const { return layout_->dim(); }
  int order() const { return layout_->order(); }
  int size() const { return layout_->size(); }

  double value() const { return c_[0]; }
  double coeff(int k) const { return c_[k]; }
  double& coeff(int k) { return c_[k]; }
  std::span<const double> coeffs() const { return c_; }

  double gradient(int i) const;
  std::vector<double> gradient() const;
  double hessian(int i, int j) const;
  // Mixed partial derivative along the listed variables (repeats allowed).
  double derivative(std::initializer_list<int> vars) const;
  double derivative(std::span<const int> vars) const;

  // d/dx_var, one order lower.
  Jet partial(int var) const;
  // Antiderivative in x_var vanishing on x_var = 0, same layout (truncated).
  Jet integral(int var) const;
  Jet truncated(int order) const;
  // Re-embeds into a layout of (dim, order); variable v goes to var_map[v].
  Jet embedded(int dim, int order, std::span<const int> var_map) const;
  // Coefficient of x_var^power as a jet in the remaining variables.
  Jet slice(int var, int power, int order) const;
  // Treating *this as a polynomial in the displacement from its expansion
  // point, substitutes displacements `args` (each with zero value).
  Jet compose(std::span<const Jet> args) const;

  bool is_constant() const;

  Jet operator-() const;
  Jet& operator+=(const Jet& b);
  Jet& operator-=(const Jet& b);
  Jet& operator*=(const Jet& b);
  Jet& operator/=(const Jet& b);
  Jet& operator+=(double b);
  Jet& operator-=(double b);
  Jet& operator*=(double b);
  Jet& operator/=(double b);

 private:
  void check_same(const Jet& b) const;

  const JetLayout* layout_;
  std::vector<double> c_;
};

Jet operator+(Jet a, const Jet& b);
Jet operator-(Jet a, const Jet& b);
Jet operator*(const Jet& a, const Jet& b);
Jet operator/(const Jet& a, const Jet& b);
Jet operator+(Jet a, double b);
Jet operator+(double a, Jet b);
Jet operator-(Jet a, double b);
Jet operator-(double a, const Jet& b);
Jet operator*(Jet a, double b);
Jet operator*(double a, Jet b);
Jet operator/(Jet a, double b);
Jet operator/(double a, const Jet& b);

// compose() of every jet in `fs` (same layout) with shared powers of `args`.
std::vector<Jet> compose(std::span<const Jet> fs, std::span<const Jet> args);

Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet sqrt(const Jet& a);
Jet reciprocal(const Jet& a);
// Real exponent; integer exponents are valid for any base value.
Jet pow(const Jet& a, double p);

}  // namespace walkergeo
