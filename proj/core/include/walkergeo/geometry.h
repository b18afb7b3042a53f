#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "walkergeo/expr.h"
#include "walkergeo/jet.h"

namespace walkergeo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Scalar field evaluated on coordinate jets sharing one layout.
using ScalarFn = std::function<Jet(std::span<const Jet>)>;

// Dense n x n x n array, index (a, b, c) row-major.
class Array3 {
 public:
  Array3() = default;
  explicit Array3(int n) : n_(n), v_(n * n * n, 0.0) {}
  int n() const { return n_; }
  double& operator()(int a, int b, int c) { return v_[(a * n_ + b) * n_ + c]; }
  double operator()(int a, int b, int c) const { return v_[(a * n_ + b) * n_ + c]; }
  const std::vector<double>& data() const { return v_; }

 private:
  int n_ = 0;
  std::vector<double> v_;
};

class Array4 {
 public:
  Array4() = default;
  explicit Array4(int n) : n_(n), v_(n * n * n * n, 0.0) {}
  int n() const { return n_; }
  double& operator()(int a, int b, int c, int d) { return v_[((a * n_ + b) * n_ + c) * n_ + d]; }
  double operator()(int a, int b, int c, int d) const {
    return v_[((a * n_ + b) * n_ + c) * n_ + d];
  }
  const std::vector<double>& data() const { return v_; }

 private:
  int n_ = 0;
  std::vector<double> v_;
};

// Metric given by component evaluators.
class MetricField {
 public:
  virtual ~MetricField() = default;
  virtual int dimension() const = 0;
  // Row-major N x N components at the jet point; symmetric by construction.
  virtual std::vector<Jet> components(std::span<const Jet> x) const = 0;
};

// Metric whose upper-triangle components are expressions in named coordinates.
class ExprMetric : public MetricField {
 public:
  // `components` is row-major N x N; only entries with row <= col are read.
  ExprMetric(std::vector<std::string> coords, const std::vector<Expr>& components,
             std::vector<std::pair<std::string, double>> params = {});
  int dimension() const override { return static_cast<int>(coords_.size()); }
  std::vector<Jet> components(std::span<const Jet> x) const override;

 private:
  std::vector<std::string> coords_;
  std::vector<double> param_values_;
  std::vector<CompiledExpr> upper_;
};

struct PointFrameData {
  std::vector<double> point;
  Matrix g;
  Matrix g_inv;
  Array3 dg;   // dg(a, b, c) = d_c g_ab
  Array4 d2g;  // d2g(a, b, c, d) = d_c d_d g_ab
};

// Inverse with LU partial pivoting; reciprocal condition below 1e-12 throws.
Matrix checked_inverse(const Matrix& m, const char* what);

PointFrameData frame_data(const MetricField& metric, std::span<const double> point);
// From order >= 2 component jets of an N x N matrix; coordinate c is jet variable vars[c].
PointFrameData frame_data_from_jets(std::span<const Jet> components, std::span<const int> vars);

// gamma(a, b, c) = Gamma^a_bc
Array3 christoffel(const PointFrameData& fd);
// dgamma(a, b, c, e) = d_e Gamma^a_bc, from d2g analytically
Array4 christoffel_derivative(const PointFrameData& fd);
// R(a, b, c, d) = R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb
Array4 riemann(const PointFrameData& fd);
// Ric_bd = R^a_bad; Ric = Lambda g on Einstein spaces of positive-definite or Lorentzian signature.
Matrix ricci(const PointFrameData& fd);
double scalar_curvature(const PointFrameData& fd);

Array4 riemann(const MetricField& metric, std::span<const double> point);
Matrix ricci(const MetricField& metric, std::span<const double> point);
double scalar_curvature(const MetricField& metric, std::span<const double> point);

// h^{ij}(d_i d_j f - Gamma^k_ij d_k f) from gradient and Hessian of f.
double laplace_beltrami(const PointFrameData& fd, const Vector& grad, const Matrix& hess);
double laplace_beltrami(const MetricField& metric, const ScalarFn& field,
                        std::span<const double> point);
// h^{ij}(d_i w_j - Gamma^k_ij w_k); dw(i, j) = d_i w_j.
double divergence(const PointFrameData& fd, const Vector& w, const Matrix& dw);
double divergence(const MetricField& metric, const std::vector<ScalarFn>& one_form,
                  std::span<const double> point);
// F_ij = d_i A_j - d_j A_i
Matrix d_one_form(const std::vector<ScalarFn>& one_form, std::span<const double> point);

}  // namespace walkergeo
