#include "walkergeo/jet.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include "walkergeo/errors.h"

namespace walkergeo {
namespace {

std::uint64_t pack(std::span<const int> exps) {
  std::uint64_t key = 0;
  for (std::size_t v = 0; v < exps.size(); ++v) key |= std::uint64_t(exps[v]) << (4 * v);
  return key;
}

// Exponent vectors of total degree d, highest power of x_0 first.
void enumerate(int dim, int d, int var, std::vector<int>& cur,
               std::vector<std::vector<int>>& out) {
  if (var == dim - 1) {
    cur[var] = d;
    out.push_back(cur);
    return;
  }
  for (int e = d; e >= 0; --e) {
    cur[var] = e;
    enumerate(dim, d - e, var + 1, cur, out);
  }
  cur[var] = 0;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// sum_k t[k] * d^k with d = a - a.value().
Jet horner(const Jet& a, const std::vector<double>& t) {
  Jet d = a;
  d.coeff(0) = 0.0;
  Jet r(a.layout(), t.back());
  for (int k = static_cast<int>(t.size()) - 2; k >= 0; --k) {
    r = r * d;
    r.coeff(0) += t[k];
  }
  return r;
}

bool is_integer(double p) { return std::isfinite(p) && std::floor(p) == p; }

}  // namespace

JetLayout::JetLayout(int dim, int order) : dim_(dim), order_(order) {
  std::vector<std::vector<int>> monos;
  if (dim == 0) {
    monos.push_back({});
  } else {
    std::vector<int> cur(dim, 0);
    for (int d = 0; d <= order; ++d) enumerate(dim, d, 0, cur, monos);
  }
  size_ = static_cast<int>(monos.size());
  exponents_.reserve(size_ * dim);
  for (int k = 0; k < size_; ++k) {
    int deg = 0;
    for (int e : monos[k]) {
      exponents_.push_back(static_cast<std::uint8_t>(e));
      deg += e;
    }
    degree_.push_back(deg);
    index_.emplace(pack(monos[k]), k);
  }
  std::vector<int> sum(dim);
  for (int i = 0; i < size_; ++i) {
    for (int j = 0; j < size_; ++j) {
      if (degree_[i] + degree_[j] > order) continue;
      for (int v = 0; v < dim; ++v) sum[v] = monos[i][v] + monos[j][v];
      mul_i_.push_back(i);
      mul_j_.push_back(j);
      mul_k_.push_back(index_.at(pack(sum)));
    }
  }
}

const JetLayout& JetLayout::get(int dim, int order) {
  if (dim < 0 || dim > kMaxDim || order < 0 || order > kMaxOrder)
    throw std::invalid_argument("jet layout out of range: dim " + std::to_string(dim) +
                                ", order " + std::to_string(order));
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<JetLayout>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{dim, order}];
  if (!slot) slot.reset(new JetLayout(dim, order));
  return *slot;
}

int JetLayout::index_of(std::span<const int> exps) const {
  int deg = 0;
  for (int e : exps) {
    if (e < 0) return -1;
    deg += e;
  }
  if (deg > order_ || static_cast<int>(exps.size()) != dim_) return -1;
  auto it = index_.find(pack(exps));
  return it == index_.end() ? -1 : it->second;
}

Jet::Jet() : Jet(JetLayout::get(0, 0), 0.0) {}

Jet::Jet(const JetLayout& layout, double value) : layout_(&layout), c_(layout.size(), 0.0) {
  c_[0] = value;
}

Jet Jet::constant(int dim, int order, double value) {
  return Jet(JetLayout::get(dim, order), value);
}

Jet Jet::variable(int dim, int order, int index, double value) {
  if (index < 0 || index >= dim)
    throw std::out_of_range("jet seed index " + std::to_string(index) + " out of range");
  Jet j(JetLayout::get(dim, order), value);
  if (order >= 1) j.c_[1 + index] = 1.0;
  return j;
}

std::vector<Jet> Jet::seed(std::span<const double> point, int order) {
  const int dim = static_cast<int>(point.size());
  std::vector<Jet> out;
  out.reserve(dim);
  for (int i = 0; i < dim; ++i) out.push_back(variable(dim, order, i, point[i]));
  return out;
}

Jet Jet::seed(std::span<const double> point, int index, int order) {
  const int dim = static_cast<int>(point.size());
  if (index < 0 || index >= dim)
    throw std::out_of_range("jet seed index " + std::to_string(index) + " out of range");
  return variable(dim, order, index, point[index]);
}

void Jet::check_same(const Jet& b) const {
  if (layout_ == b.layout_) return;
  throw std::invalid_argument("jet layout mismatch: (" + std::to_string(dim()) + "," +
                              std::to_string(order()) + ") vs (" + std::to_string(b.dim()) +
                              "," + std::to_string(b.order()) + ")");
}

double Jet::gradient(int i) const {
  if (order() < 1) throw std::logic_error("gradient of an order-0 jet");
  return c_[1 + i];
}

std::vector<double> Jet::gradient() const {
  std::vector<double> g(dim());
  for (int i = 0; i < dim(); ++i) g[i] = gradient(i);
  return g;
}

double Jet::hessian(int i, int j) const { return derivative({i, j}); }

double Jet::derivative(std::initializer_list<int> vars) const {
  return derivative(std::span<const int>(vars.begin(), vars.size()));
}

double Jet::derivative(std::span<const int> vars) const {
  std::vector<int> exps(dim(), 0);
  for (int v : vars) {
    if (v < 0 || v >= dim()) throw std::out_of_range("jet derivative variable out of range");
    ++exps[v];
  }
  if (static_cast<int>(vars.size()) > order())
    throw std::logic_error("jet derivative beyond truncation order");
  const int k = layout_->index_of(exps);
  double f = 1.0;
  for (int e : exps) f *= factorial(e);
  return c_[k] * f;
}

Jet Jet::partial(int var) const {
  if (order() < 1) throw std::logic_error("partial derivative of an order-0 jet");
  const JetLayout& out_layout = JetLayout::get(dim(), order() - 1);
  Jet r(out_layout, 0.0);
  std::vector<int> exps(dim());
  for (int k = 0; k < out_layout.size(); ++k) {
    for (int v = 0; v < dim(); ++v) exps[v] = out_layout.exponent(k, v);
    ++exps[var];
    r.c_[k] = exps[var] * c_[layout_->index_of(exps)];
  }
  return r;
}

Jet Jet::integral(int var) const {
  Jet r(*layout_, 0.0);
  std::vector<int> exps(dim());
  for (int k = 0; k < size(); ++k) {
    if (layout_->degree(k) == order()) continue;
    for (int v = 0; v < dim(); ++v) exps[v] = layout_->exponent(k, v);
    ++exps[var];
    r.c_[layout_->index_of(exps)] = c_[k] / exps[var];
  }
  return r;
}

Jet Jet::truncated(int new_order) const {
  if (new_order > order()) throw std::logic_error("cannot raise jet order by truncation");
  const JetLayout& out_layout = JetLayout::get(dim(), new_order);
  Jet r(out_layout, 0.0);
  std::copy(c_.begin(), c_.begin() + out_layout.size(), r.c_.begin());
  return r;
}

Jet Jet::embedded(int new_dim, int new_order, std::span<const int> var_map) const {
  const JetLayout& out_layout = JetLayout::get(new_dim, new_order);
  Jet r(out_layout, 0.0);
  std::vector<int> exps(new_dim);
  for (int k = 0; k < size(); ++k) {
    if (layout_->degree(k) > new_order) continue;
    std::fill(exps.begin(), exps.end(), 0);
    for (int v = 0; v < dim(); ++v) exps[var_map[v]] += layout_->exponent(k, v);
    r.c_[out_layout.index_of(exps)] += c_[k];
  }
  return r;
}

Jet Jet::slice(int var, int power, int new_order) const {
  if (new_order + power > order()) throw std::logic_error("jet slice beyond truncation order");
  const JetLayout& out_layout = JetLayout::get(dim() - 1, new_order);
  Jet r(out_layout, 0.0);
  std::vector<int> exps(dim());
  for (int k = 0; k < out_layout.size(); ++k) {
    for (int v = 0, w = 0; v < dim(); ++v) exps[v] = v == var ? power : out_layout.exponent(k, w++);
    r.c_[k] = c_[layout_->index_of(exps)];
  }
  return r;
}

Jet Jet::compose(std::span<const Jet> args) const {
  return walkergeo::compose(std::span<const Jet>(this, 1), args)[0];
}

std::vector<Jet> compose(std::span<const Jet> fs, std::span<const Jet> args) {
  if (fs.empty()) return {};
  const JetLayout& in = fs[0].layout();
  const int dim = in.dim(), order = in.order();
  if (static_cast<int>(args.size()) != dim) throw std::invalid_argument("compose arity mismatch");
  if (args.empty()) return {fs.begin(), fs.end()};
  const JetLayout& out_layout = args[0].layout();
  // powers[v][e] = args[v]^e
  std::vector<std::vector<Jet>> powers(dim);
  for (int v = 0; v < dim; ++v) {
    if (&args[v].layout() != &out_layout) throw std::invalid_argument("compose: mixed layouts");
    powers[v].push_back(Jet(out_layout, 1.0));
    for (int e = 1; e <= order; ++e) powers[v].push_back(powers[v].back() * args[v]);
  }
  std::vector<Jet> monomials(in.size());
  for (int k = 0; k < in.size(); ++k) {
    Jet term(out_layout, 1.0);
    for (int v = 0; v < dim; ++v) {
      const int e = in.exponent(k, v);
      if (e > 0) term = term * powers[v][e];
    }
    monomials[k] = std::move(term);
  }
  std::vector<Jet> out;
  for (const Jet& f : fs) {
    if (&f.layout() != &in) throw std::invalid_argument("compose: mixed layouts");
    Jet r(out_layout, 0.0);
    for (int k = 0; k < in.size(); ++k) {
      const double c = f.coeff(k);
      if (c == 0.0) continue;
      const std::span<const double> m = monomials[k].coeffs();
      for (int i = 0; i < out_layout.size(); ++i) r.coeff(i) += c * m[i];
    }
    out.push_back(std::move(r));
  }
  return out;
}

bool Jet::is_constant() const {
  return std::all_of(c_.begin() + 1, c_.end(), [](double x) { return x == 0.0; });
}

Jet Jet::operator-() const {
  Jet r = *this;
  for (double& x : r.c_) x = -x;
  return r;
}

Jet& Jet::operator+=(const Jet& b) {
  check_same(b);
  for (int k = 0; k < size(); ++k) c_[k] += b.c_[k];
  return *this;
}

Jet& Jet::operator-=(const Jet& b) {
  check_same(b);
  for (int k = 0; k < size(); ++k) c_[k] -= b.c_[k];
  return *this;
}

Jet& Jet::operator*=(const Jet& b) { return *this = *this * b; }
Jet& Jet::operator/=(const Jet& b) { return *this = *this / b; }

Jet& Jet::operator+=(double b) {
  c_[0] += b;
  return *this;
}

Jet& Jet::operator-=(double b) {
  c_[0] -= b;
  return *this;
}

Jet& Jet::operator*=(double b) {
  for (double& x : c_) x *= b;
  return *this;
}

Jet& Jet::operator/=(double b) {
  if (b == 0.0) throw DomainError("division by zero");
  for (double& x : c_) x /= b;
  return *this;
}

Jet operator+(Jet a, const Jet& b) { return a += b; }
Jet operator-(Jet a, const Jet& b) { return a -= b; }

Jet operator*(const Jet& a, const Jet& b) {
  if (&a.layout() != &b.layout())
    throw std::invalid_argument("jet layout mismatch in multiplication");
  const JetLayout& L = a.layout();
  Jet r(L, 0.0);
  if (L.size() == 1) {
    r.coeff(0) = a.value() * b.value();
    return r;
  }
  if (b.is_constant()) return a * b.value();
  if (a.is_constant()) return b * a.value();
  const int* mi = L.mul_i().data();
  const int* mj = L.mul_j().data();
  const int* mk = L.mul_k().data();
  const std::size_t n = L.mul_i().size();
  const double* ac = a.coeffs().data();
  const double* bc = b.coeffs().data();
  double* rc = &r.coeff(0);
  for (std::size_t t = 0; t < n; ++t) rc[mk[t]] += ac[mi[t]] * bc[mj[t]];
  return r;
}

Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
Jet operator+(Jet a, double b) { return a += b; }
Jet operator+(double a, Jet b) { return b += a; }
Jet operator-(Jet a, double b) { return a -= b; }
Jet operator-(double a, const Jet& b) { return (-b) += a; }
Jet operator*(Jet a, double b) { return a *= b; }
Jet operator*(double a, Jet b) { return b *= a; }
Jet operator/(Jet a, double b) { return a /= b; }
Jet operator/(double a, const Jet& b) { return reciprocal(b) *= a; }

Jet exp(const Jet& a) {
  const int K = a.order();
  std::vector<double> t(K + 1);
  const double e = std::exp(a.value());
  for (int k = 0; k <= K; ++k) t[k] = e / factorial(k);
  return horner(a, t);
}

Jet log(const Jet& a) {
  const double x = a.value();
  if (!(x > 0.0)) throw DomainError("ln of non-positive value " + std::to_string(x));
  const int K = a.order();
  std::vector<double> t(K + 1);
  t[0] = std::log(x);
  for (int k = 1; k <= K; ++k) t[k] = ((k % 2) ? 1.0 : -1.0) / (k * std::pow(x, k));
  return horner(a, t);
}

Jet sin(const Jet& a) {
  const int K = a.order();
  const double s = std::sin(a.value()), c = std::cos(a.value());
  const double cyc[4] = {s, c, -s, -c};
  std::vector<double> t(K + 1);
  for (int k = 0; k <= K; ++k) t[k] = cyc[k % 4] / factorial(k);
  return horner(a, t);
}

Jet cos(const Jet& a) {
  const int K = a.order();
  const double s = std::sin(a.value()), c = std::cos(a.value());
  const double cyc[4] = {c, -s, -c, s};
  std::vector<double> t(K + 1);
  for (int k = 0; k <= K; ++k) t[k] = cyc[k % 4] / factorial(k);
  return horner(a, t);
}

Jet sqrt(const Jet& a) {
  if (!(a.value() > 0.0))
    throw DomainError("sqrt of non-positive value " + std::to_string(a.value()));
  return pow(a, 0.5);
}

Jet reciprocal(const Jet& a) {
  if (a.value() == 0.0) throw DomainError("division by zero");
  return pow(a, -1.0);
}

Jet pow(const Jet& a, double p) {
  if (is_integer(p) && p >= 0.0) {
    Jet r(a.layout(), 1.0);
    Jet base = a;
    for (long long e = static_cast<long long>(p); e > 0; e >>= 1) {
      if (e & 1) r = r * base;
      if (e > 1) base = base * base;
    }
    return r;
  }
  const double x = a.value();
  if (x == 0.0) throw DomainError("negative or fractional power of zero");
  if (x < 0.0 && !is_integer(p))
    throw DomainError("fractional power of negative value " + std::to_string(x));
  const int K = a.order();
  std::vector<double> t(K + 1);
  double binom = 1.0;
  for (int k = 0; k <= K; ++k) {
    t[k] = binom * std::pow(x, p - k);
    binom *= (p - k) / (k + 1);
  }
  return horner(a, t);
}

}  // namespace walkergeo
