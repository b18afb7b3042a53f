#include "walkergeo/geometry.h"

#include <cmath>
#include <stdexcept>

#include "walkergeo/errors.h"

namespace walkergeo {

ExprMetric::ExprMetric(std::vector<std::string> coords, const std::vector<Expr>& components,
                       std::vector<std::pair<std::string, double>> params)
    : coords_(std::move(coords)) {
  const int n = dimension();
  if (static_cast<int>(components.size()) != n * n)
    throw std::invalid_argument("metric needs N*N components");
  std::vector<std::string> slots = coords_;
  for (auto& [name, value] : params) {
    slots.push_back(name);
    param_values_.push_back(value);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) upper_.emplace_back(components[a * n + b], slots);
}

std::vector<Jet> ExprMetric::components(std::span<const Jet> x) const {
  const int n = dimension();
  if (static_cast<int>(x.size()) != n) throw std::invalid_argument("metric point dimension");
  std::vector<Jet> slots(x.begin(), x.end());
  for (double p : param_values_) slots.emplace_back(x[0].layout(), p);
  std::vector<Jet> g(n * n);
  int k = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      g[a * n + b] = upper_[k++](slots);
      if (b != a) g[b * n + a] = g[a * n + b];
    }
  }
  return g;
}

Matrix checked_inverse(const Matrix& m, const char* what) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 1e-12))
    throw SingularMetricError(std::string(what) + " is singular (rcond " + std::to_string(rc) + ")");
  return lu.inverse();
}

PointFrameData frame_data_from_jets(std::span<const Jet> components, std::span<const int> vars) {
  const int n = static_cast<int>(vars.size());
  if (static_cast<int>(components.size()) != n * n)
    throw std::invalid_argument("frame data: component count mismatch");
  PointFrameData fd;
  fd.g = Matrix(n, n);
  fd.dg = Array3(n);
  fd.d2g = Array4(n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const Jet& j = components[a * n + b];
      fd.g(a, b) = j.value();
      for (int c = 0; c < n; ++c) {
        fd.dg(a, b, c) = j.gradient(vars[c]);
        for (int d = 0; d < n; ++d) fd.d2g(a, b, c, d) = j.hessian(vars[c], vars[d]);
      }
    }
  }
  fd.g_inv = checked_inverse(fd.g, "metric");
  return fd;
}

PointFrameData frame_data(const MetricField& metric, std::span<const double> point) {
  const int n = metric.dimension();
  if (static_cast<int>(point.size()) != n) throw std::invalid_argument("frame data point dimension");
  std::vector<Jet> x = Jet::seed(point, 2);
  std::vector<int> vars(n);
  for (int i = 0; i < n; ++i) vars[i] = i;
  PointFrameData fd = frame_data_from_jets(metric.components(x), vars);
  fd.point.assign(point.begin(), point.end());
  return fd;
}

Array3 christoffel(const PointFrameData& fd) {
  const int n = static_cast<int>(fd.g.rows());
  Array3 low(n);  // Gamma_dbc
  for (int d = 0; d < n; ++d)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        low(d, b, c) = 0.5 * (fd.dg(d, c, b) + fd.dg(b, d, c) - fd.dg(b, c, d));
  Array3 gamma(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += fd.g_inv(a, d) * low(d, b, c);
        gamma(a, b, c) = s;
      }
  return gamma;
}

Array4 christoffel_derivative(const PointFrameData& fd) {
  const int n = static_cast<int>(fd.g.rows());
  // d_e g^{ad} = -g^{af} d_e g_fh g^{hd}
  Array3 dginv(n);
  for (int e = 0; e < n; ++e) {
    Matrix dge(n, n);
    for (int f = 0; f < n; ++f)
      for (int h = 0; h < n; ++h) dge(f, h) = fd.dg(f, h, e);
    Matrix r = -fd.g_inv * dge * fd.g_inv;
    for (int a = 0; a < n; ++a)
      for (int d = 0; d < n; ++d) dginv(a, d, e) = r(a, d);
  }
  Array4 dgamma(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c)
        for (int e = 0; e < n; ++e) {
          double s = 0.0;
          for (int d = 0; d < n; ++d) {
            const double low = 0.5 * (fd.dg(d, c, b) + fd.dg(b, d, c) - fd.dg(b, c, d));
            const double dlow =
                0.5 * (fd.d2g(d, c, b, e) + fd.d2g(b, d, c, e) - fd.d2g(b, c, d, e));
            s += dginv(a, d, e) * low + fd.g_inv(a, d) * dlow;
          }
          dgamma(a, b, c, e) = s;
          dgamma(a, c, b, e) = s;
        }
  return dgamma;
}

Array4 riemann(const PointFrameData& fd) {
  const int n = static_cast<int>(fd.g.rows());
  const Array3 G = christoffel(fd);
  const Array4 dG = christoffel_derivative(fd);
  Array4 R(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = c + 1; d < n; ++d) {
          double s = dG(a, d, b, c) - dG(a, c, b, d);
          for (int e = 0; e < n; ++e) s += G(a, c, e) * G(e, d, b) - G(a, d, e) * G(e, c, b);
          R(a, b, c, d) = s;
          R(a, b, d, c) = -s;
        }
  return R;
}

Matrix ricci(const PointFrameData& fd) {
  const int n = static_cast<int>(fd.g.rows());
  const Array4 R = riemann(fd);
  Matrix ric = Matrix::Zero(n, n);
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a) ric(b, d) += R(a, b, a, d);
  return ric;
}

double scalar_curvature(const PointFrameData& fd) {
  return (fd.g_inv.cwiseProduct(ricci(fd))).sum();
}

Array4 riemann(const MetricField& metric, std::span<const double> point) {
  return riemann(frame_data(metric, point));
}

Matrix ricci(const MetricField& metric, std::span<const double> point) {
  return ricci(frame_data(metric, point));
}

double scalar_curvature(const MetricField& metric, std::span<const double> point) {
  return scalar_curvature(frame_data(metric, point));
}

double laplace_beltrami(const PointFrameData& fd, const Vector& grad, const Matrix& hess) {
  const int n = static_cast<int>(fd.g.rows());
  const Array3 G = christoffel(fd);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double t = hess(i, j);
      for (int k = 0; k < n; ++k) t -= G(k, i, j) * grad(k);
      s += fd.g_inv(i, j) * t;
    }
  return s;
}

double laplace_beltrami(const MetricField& metric, const ScalarFn& field,
                        std::span<const double> point) {
  const PointFrameData fd = frame_data(metric, point);
  const int n = metric.dimension();
  const Jet f = field(Jet::seed(point, 2));
  Vector grad(n);
  Matrix hess(n, n);
  for (int i = 0; i < n; ++i) {
    grad(i) = f.gradient(i);
    for (int j = 0; j < n; ++j) hess(i, j) = f.hessian(i, j);
  }
  return laplace_beltrami(fd, grad, hess);
}

double divergence(const PointFrameData& fd, const Vector& w, const Matrix& dw) {
  const int n = static_cast<int>(fd.g.rows());
  const Array3 G = christoffel(fd);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double t = dw(i, j);
      for (int k = 0; k < n; ++k) t -= G(k, i, j) * w(k);
      s += fd.g_inv(i, j) * t;
    }
  return s;
}

double divergence(const MetricField& metric, const std::vector<ScalarFn>& one_form,
                  std::span<const double> point) {
  const int n = metric.dimension();
  if (static_cast<int>(one_form.size()) != n) throw std::invalid_argument("one-form arity");
  const PointFrameData fd = frame_data(metric, point);
  const std::vector<Jet> x = Jet::seed(point, 1);
  Vector w(n);
  Matrix dw(n, n);
  for (int j = 0; j < n; ++j) {
    const Jet wj = one_form[j](x);
    w(j) = wj.value();
    for (int i = 0; i < n; ++i) dw(i, j) = wj.gradient(i);
  }
  return divergence(fd, w, dw);
}

Matrix d_one_form(const std::vector<ScalarFn>& one_form, std::span<const double> point) {
  const int n = static_cast<int>(one_form.size());
  const std::vector<Jet> x = Jet::seed(point, 1);
  Matrix dA(n, n);
  for (int j = 0; j < n; ++j) {
    const Jet a = one_form[j](x);
    for (int i = 0; i < n; ++i) dA(i, j) = a.gradient(i);
  }
  return dA - dA.transpose();
}

}  // namespace walkergeo
