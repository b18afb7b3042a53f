#include "walkergeo/transform.h"

#include <array>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "walkergeo/errors.h"

namespace walkergeo {
namespace {

constexpr const char* kXp = "xp";
constexpr const char* kXm = "xm";

bool is_seed_at(std::span<const Jet> xt) {
  const int N = static_cast<int>(xt.size());
  if (xt.empty() || xt[0].dim() != N) return false;
  for (int a = 0; a < N; ++a) {
    const Jet& j = xt[a];
    if (j.order() < 1) return false;
    for (int k = 1; k < j.size(); ++k)
      if (j.coeff(k) != (k == 1 + a ? 1.0 : 0.0)) return false;
  }
  return true;
}

std::vector<double> values_of(std::span<const Jet> xs) {
  std::vector<double> v;
  for (const Jet& x : xs) v.push_back(x.value());
  return v;
}

// Expressions over (xp, x^1..x^n, xm, params) evaluated at full jets.
class SlotExprs {
 public:
  SlotExprs() = default;
  SlotExprs(const WalkerMetric& w, const std::vector<Expr>& exprs) {
    std::vector<std::string> slots = w.all_coords();
    if (w.exprs())
      for (const auto& [name, value] : w.exprs()->params) {
        slots.push_back(name);
        params_.push_back(value);
      }
    for (const Expr& e : exprs) compiled_.emplace_back(e, slots);
  }
  bool empty() const { return compiled_.empty(); }
  std::vector<Jet> operator()(std::span<const Jet> full) const {
    std::vector<Jet> slots(full.begin(), full.end());
    for (double p : params_) slots.emplace_back(full[0].layout(), p);
    std::vector<Jet> out;
    for (const CompiledExpr& c : compiled_) out.push_back(c(slots));
    return out;
  }

 private:
  std::vector<CompiledExpr> compiled_;
  std::vector<double> params_;
};

std::vector<Jet> full_point(std::span<const Jet> y, const Jet& t) {
  std::vector<Jet> x;
  x.emplace_back(t.layout(), 0.0);
  x.insert(x.end(), y.begin(), y.end());
  x.push_back(t);
  return x;
}

// V = h^{-1}(G - A)
VectorField make_field(const WalkerMetric& w, std::function<std::vector<Jet>(std::span<const Jet>, const Jet&)> G) {
  return [w, G](std::span<const Jet> y, const Jet& t) {
    const int n = w.n();
    const std::vector<Jet> x = full_point(y, t);
    const WalkerComponents c = w.components(x, kPartH | kPartA);
    const std::vector<Jet> hinv = jet_inverse(c.h, n);
    std::vector<Jet> cov(n);
    for (int i = 0; i < n; ++i) cov[i] = -c.A[i];
    if (G) {
      const std::vector<Jet> g = G(y, t);
      for (int i = 0; i < n; ++i) cov[i] += g[i];
    }
    std::vector<Jet> v(n, Jet(t.layout(), 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) v[i] += hinv[i * n + j] * cov[j];
    return v;
  };
}

std::vector<std::vector<double>> probes_for(const Box& box, double base) {
  auto pts = sample_points(box.shrunk(0.5), 4, 0);
  const auto [lo, hi] = box.bounds.back();
  const double far = std::abs(hi - base) >= std::abs(lo - base) ? hi : lo;
  for (auto& p : pts) p.back() = far;
  return pts;
}

void check_profile(const WalkerMetric& w, double lambda, const Box& box) {
  const double probes[] = {-1.0, 0.0, 1.0};
  const HProfile p = extract_profile(w, probes, sample_points(box, 10, 0),
                                     1e-8 * std::max(1.0, std::abs(lambda)));
  if (std::abs(p.lambda_hat - lambda) > 1e-8 * std::max(1.0, std::abs(lambda)))
    throw ProfileError("x+^2 coefficient of H is " + std::to_string(p.lambda_hat) +
                       ", declared Lambda is " + std::to_string(lambda));
}

Expr h1_expr(const WalkerExprs& e) { return substitute(diff(e.H, kXp), kXp, Expr::number(0.0)); }

}  // namespace

// ---------------------------------------------------------------- maps

std::vector<Jet> CoordinateMap::to_original(std::span<const Jet> xt) const {
  if (static_cast<int>(xt.size()) != dimension()) throw std::invalid_argument("map arity mismatch");
  const std::vector<double> x0 = values_of(xt);
  std::vector<Jet> T = taylor(x0, xt[0].order());
  if (is_seed_at(xt)) return T;
  std::vector<Jet> d;
  for (const Jet& j : xt) d.push_back(j - j.value());
  return compose(T, d);
}

std::vector<double> CoordinateMap::to_original(std::span<const double> xt) const {
  return values_of(taylor(xt, 0));
}

Matrix CoordinateMap::jacobian(std::span<const double> xt) const {
  const std::vector<Jet> T = taylor(xt, 1);
  const int N = dimension();
  Matrix J(N, N);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) J(a, b) = T[a].coeff(1 + b);
  return J;
}

std::vector<double> CoordinateMap::to_new(std::span<const double> x, double tol) const {
  const int N = dimension();
  Vector xt = Eigen::Map<const Vector>(x.data(), N);
  for (int it = 0; it < 50; ++it) {
    const std::vector<Jet> T = taylor(std::span<const double>(xt.data(), N), 1);
    Vector r(N);
    Matrix J(N, N);
    for (int a = 0; a < N; ++a) {
      r(a) = T[a].value() - x[a];
      for (int b = 0; b < N; ++b) J(a, b) = T[a].coeff(1 + b);
    }
    if (r.cwiseAbs().maxCoeff() <= tol) break;
    xt -= J.partialPivLu().solve(r);
  }
  return {xt.data(), xt.data() + N};
}

ExprMap::ExprMap(std::vector<std::string> names, std::vector<Expr> exprs,
                 std::vector<std::pair<std::string, double>> params)
    : exprs_(std::move(exprs)) {
  if (names.size() != exprs_.size()) throw std::invalid_argument("map needs one expression per coordinate");
  for (const auto& [name, value] : params) {
    names.push_back(name);
    params_.push_back(value);
  }
  for (const Expr& e : exprs_) compiled_.emplace_back(e, names);
}

std::vector<Jet> ExprMap::taylor(std::span<const double> xt0, int order) const {
  std::vector<Jet> slots = Jet::seed(xt0, order);
  const JetLayout& L = slots[0].layout();
  for (double p : params_) slots.emplace_back(L, p);
  std::vector<Jet> out;
  for (const CompiledExpr& c : compiled_) out.push_back(c(slots, L));
  return out;
}

FlowMap::FlowMap(int n, VectorField field, PlusShift plus, double base_slice, Box box,
                 FlowSettings settings)
    : n_(n),
      field_(std::move(field)),
      plus_(std::move(plus)),
      base_(base_slice),
      box_(std::move(box)),
      settings_(settings),
      step_(settings.step) {
  if (box_.dimension() != n + 2) throw std::invalid_argument("flow box must cover all n+2 coordinates");
}

std::vector<Jet> FlowMap::integrate_jets(std::vector<Jet> y, double t_end, double step) const {
  if (!field_ || t_end == base_) return y;
  const auto [tlo, thi] = box_.bounds.back();
  if (t_end < tlo - 1e-12 || t_end > thi + 1e-12)
    throw FlowError("x- = " + std::to_string(t_end) + " is outside the flow box");
  const JetLayout& L = y[0].layout();
  const double span = t_end - base_;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) / step - 1e-9)));
  const double h = span / steps;
  auto add = [](std::vector<Jet> a, const std::vector<Jet>& b, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i] * s;
    return a;
  };
  for (int k = 0; k < steps; ++k) {
    const double t = base_ + k * h;
    const auto k1 = field_(y, Jet(L, t));
    const auto k2 = field_(add(y, k1, 0.5 * h), Jet(L, t + 0.5 * h));
    const auto k3 = field_(add(y, k2, 0.5 * h), Jet(L, t + 0.5 * h));
    const auto k4 = field_(add(y, k3, h), Jet(L, t + h));
    for (int i = 0; i < n_; ++i) y[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
    for (int i = 0; i < n_; ++i) {
      const auto [lo, hi] = box_.bounds[1 + i];
      const double v = y[i].value();
      if (!std::isfinite(v) || v < lo - 1e-12 || v > hi + 1e-12)
        throw FlowError("flow left the box at x- = " + std::to_string(t + h) + " (coordinate " +
                        std::to_string(1 + i) + " = " + std::to_string(v) + ")");
    }
  }
  return y;
}

std::vector<double> FlowMap::integrate(std::span<const double> xt, double step) const {
  std::vector<Jet> y;
  for (int i = 0; i < n_; ++i) y.push_back(Jet::constant(n_, 0, xt[1 + i]));
  return values_of(integrate_jets(std::move(y), xt[n_ + 1], step));
}

void FlowMap::calibrate(const std::vector<std::vector<double>>& probes) {
  if (!field_) return;
  double h = settings_.step;
  for (int k = 0; k <= settings_.max_halvings; ++k) {
    double diff = 0.0;
    for (const auto& p : probes) {
      const auto a = integrate(p, h), b = integrate(p, 0.5 * h);
      for (int i = 0; i < n_; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    if (diff <= settings_.agreement) {
      step_ = h;
      return;
    }
    h *= 0.5;
  }
  throw FlowError("RK4 step refinement did not reach " + std::to_string(settings_.agreement));
}

std::vector<Jet> FlowMap::taylor(std::span<const double> xt0, int order) const {
  const int N = n_ + 2;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (const CacheEntry& e : cache_)
      if (e.order >= order && std::equal(e.point.begin(), e.point.end(), xt0.begin(), xt0.end())) {
        std::vector<Jet> out;
        for (const Jet& j : e.taylor) out.push_back(j.truncated(order));
        return out;
      }
  }
  const double t_end = xt0[N - 1];
  std::vector<Jet> y;
  for (int i = 0; i < n_; ++i) y.push_back(Jet::variable(n_, order, i, xt0[1 + i]));
  y = integrate_jets(std::move(y), t_end, step_);
  if (order >= 1 && field_) {
    Matrix J(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) J(i, j) = y[i].coeff(1 + j);
    const double det = J.determinant();
    if (!(std::abs(det) > settings_.det_min))
      throw FlowError("flow Jacobian is degenerate (det " + std::to_string(det) + ")");
  }
  // x~- dependence by Picard iteration in tau = x~- - t_end
  std::vector<int> spatial(n_);
  for (int i = 0; i < n_; ++i) spatial[i] = i;
  std::vector<Jet> Y0;
  for (const Jet& yi : y) Y0.push_back(yi.embedded(n_ + 1, order, spatial));
  std::vector<Jet> Y = Y0;
  if (field_ && order >= 1) {
    const Jet t = Jet::variable(n_ + 1, order, n_, t_end);
    for (int it = 0; it < order; ++it) {
      const std::vector<Jet> F = field_(Y, t);
      for (int i = 0; i < n_; ++i) Y[i] = Y0[i] + F[i].integral(n_);
    }
  }
  std::vector<int> to_full(n_ + 1);
  for (int i = 0; i < n_; ++i) to_full[i] = 1 + i;
  to_full[n_] = N - 1;
  std::vector<Jet> out(N);
  for (int i = 0; i < n_; ++i) out[1 + i] = Y[i].embedded(N, order, to_full);
  out[N - 1] = Jet::variable(N, order, N - 1, t_end);
  out[0] = Jet::variable(N, order, 0, xt0[0]);
  if (plus_) out[0] += plus_(std::span<const Jet>(out).subspan(1, n_), out[N - 1]);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cache_.size() >= 8) cache_.erase(cache_.begin());
    cache_.push_back({std::vector<double>(xt0.begin(), xt0.end()), order, out});
  }
  return out;
}

// ---------------------------------------------------------------- pullback

namespace {

class PullbackSource : public WalkerSource {
 public:
  PullbackSource(WalkerMetric w, std::shared_ptr<const CoordinateMap> map)
      : full_(std::move(w)), map_(std::move(map)) {}

  WalkerComponents evaluate(std::span<const Jet> xt, unsigned parts) const override {
    const int N = full_.dimension(), n = N - 2;
    const int K = xt[0].order();
    const std::vector<double> x0 = values_of(xt);
    const std::vector<Jet> T = map_->taylor(x0, K + 1);
    std::vector<Jet> fs;
    for (int a = 0; a < N; ++a) fs.push_back(T[a].truncated(K));
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) fs.push_back(T[a].partial(b));
    if (!is_seed_at(xt)) {
      std::vector<Jet> d;
      for (const Jet& j : xt) d.push_back(j - j.value());
      fs = compose(fs, d);
    }
    const std::span<const Jet> X(fs.data(), N);
    auto J = [&](int a, int b) -> const Jet& { return fs[N + a * N + b]; };
    const std::vector<Jet> g = full_.components(X);
    const JetLayout& L = fs[0].layout();
    // M(c, b) = g_cd J(d, b)
    std::vector<Jet> M(N * N, Jet(L, 0.0));
    for (int c = 0; c < N; ++c)
      for (int d = 0; d < N; ++d) {
        const Jet& gcd = g[c * N + d];
        if (gcd.is_constant() && gcd.value() == 0.0) continue;
        for (int b = 1; b < N; ++b) M[c * N + b] += gcd * J(d, b);
      }
    auto gt = [&](int a, int b) {
      Jet s(L, 0.0);
      for (int c = 0; c < N; ++c) s += J(c, a) * M[c * N + b];
      return s;
    };
    WalkerComponents out;
    if (parts & kPartH) {
      out.h.resize(n * n);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          out.h[i * n + j] = gt(1 + i, 1 + j);
          out.h[j * n + i] = out.h[i * n + j];
        }
    }
    if (parts & kPartA)
      for (int i = 0; i < n; ++i) out.A.push_back(gt(1 + i, N - 1));
    if (parts & kPartHH) out.H = gt(N - 1, N - 1);
    return out;
  }

 private:
  WalkerFullMetric full_;
  std::shared_ptr<const CoordinateMap> map_;
};

}  // namespace

WalkerMetric pullback(const WalkerMetric& w, std::shared_ptr<const CoordinateMap> map,
                      WalkerForm form, std::optional<double> lambda) {
  auto src = std::make_shared<PullbackSource>(w, std::move(map));
  return WalkerMetric(w.coords(), src, form, lambda);
}

Matrix pullback_at(const MetricField& g, const CoordinateMap& map, std::span<const double> xt) {
  const int N = map.dimension();
  const std::vector<Jet> T = map.taylor(xt, 1);
  Matrix J(N, N);
  std::vector<double> x(N);
  for (int a = 0; a < N; ++a) {
    x[a] = T[a].value();
    for (int b = 0; b < N; ++b) J(a, b) = T[a].coeff(1 + b);
  }
  std::vector<Jet> xj;
  for (double v : x) xj.push_back(Jet::constant(N, 0, v));
  const std::vector<Jet> comps = g.components(xj);
  Matrix G(N, N);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) G(a, b) = comps[a * N + b].value();
  return J.transpose() * G * J;
}

std::vector<Jet> jet_gradient(const ScalarFn& f, std::span<const Jet> y) {
  const int d = y[0].dim(), K = y[0].order(), m = static_cast<int>(y.size());
  std::vector<int> map(d);
  for (int i = 0; i < d; ++i) map[i] = i;
  std::vector<Jet> z0;
  for (const Jet& yi : y) z0.push_back(yi.embedded(d + 1, K + 1, map));
  std::vector<Jet> out;
  for (int a = 0; a < m; ++a) {
    std::vector<Jet> z = z0;
    z[a] += Jet::variable(d + 1, K + 1, d, 0.0);
    out.push_back(f(z).slice(d, 1, K));
  }
  return out;
}

// ---------------------------------------------------------------- gauge

namespace {

class GaugeInverseMap : public CoordinateMap {
 public:
  GaugeInverseMap(const WalkerMetric& w, const GaugeSpec& g)
      : n_(w.n()), c_(g.c), psi_(w, g.psi), phi_(w, {g.phi}) {}

  std::string kind() const override { return "closed_form"; }
  int dimension() const override { return n_ + 2; }

  std::vector<Jet> taylor(std::span<const double> xt0, int order) const override {
    return invert(Jet::seed(xt0, order));
  }

  // x(x~) on jets of any layout.
  std::vector<Jet> invert(std::span<const Jet> xt) const {
    const int N = n_ + 2;
    const std::vector<double> xt0 = values_of(xt);
    const double xm = xt0[N - 1] - c_;
    // values: Newton on psi(x, xm) = x~
    Vector x(n_);
    for (int i = 0; i < n_; ++i) x(i) = xt0[1 + i];
    Matrix Jv(n_, n_);
    for (int it = 0; it < 60; ++it) {
      std::vector<double> p(N, 0.0);
      for (int i = 0; i < n_; ++i) p[1 + i] = x(i);
      p[N - 1] = xm;
      const std::vector<Jet> ps = psi_(Jet::seed(p, 1));
      Vector r(n_);
      for (int i = 0; i < n_; ++i) {
        r(i) = ps[i].value() - xt0[1 + i];
        for (int j = 0; j < n_; ++j) Jv(i, j) = ps[i].coeff(2 + j);
      }
      const double err = r.cwiseAbs().maxCoeff();
      x -= Jv.partialPivLu().solve(r);
      if (err <= 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) break;
      if (it == 59) throw FlowError("gauge inversion did not converge");
    }
    const Matrix Minv = checked_inverse(Jv, "psi Jacobian");
    // jets: fixed-Jacobian Newton gains one order per sweep
    const JetLayout& L = xt[0].layout();
    std::vector<Jet> X(N);
    X[0] = Jet(L, 0.0);
    for (int i = 0; i < n_; ++i) X[1 + i] = Jet(L, x(i));
    X[N - 1] = xt[N - 1] - c_;
    for (int it = 0; it <= L.order(); ++it) {
      const std::vector<Jet> ps = psi_(X);
      std::vector<Jet> r;
      for (int i = 0; i < n_; ++i) r.push_back(ps[i] - xt[1 + i]);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) X[1 + i] -= r[j] * Minv(i, j);
    }
    X[0] = xt[0] - phi_(X)[0];
    return X;
  }

 private:
  int n_;
  double c_;
  SlotExprs psi_, phi_;
};

class GaugeSource : public WalkerSource {
 public:
  GaugeSource(const WalkerMetric& w, const GaugeSpec& g)
      : w_(w), map_(std::make_shared<GaugeInverseMap>(w, g)) {
    const int n = w.n();
    std::vector<Expr> d;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) d.push_back(diff(g.psi[i], w.coords()[k]));
      d.push_back(diff(g.psi[i], kXm));
    }
    for (int k = 0; k < n; ++k) d.push_back(diff(g.phi, w.coords()[k]));
    d.push_back(diff(g.phi, kXm));
    derivs_ = SlotExprs(w, d);
  }

  WalkerComponents evaluate(std::span<const Jet> xt, unsigned parts) const override {
    const int n = w_.n();
    const std::vector<Jet> X = map_->invert(xt);
    const WalkerComponents c = w_.components(X, kPartAll);
    const InverseBlocks ib = inverse_blocks(c, n);
    const std::vector<Jet> d = derivs_(X);
    auto dpsi = [&](int i, int k) -> const Jet& { return d[i * (n + 1) + k]; };  // k = n is d_-
    auto dphi = [&](int k) -> const Jet& { return d[n * (n + 1) + k]; };
    const JetLayout& L = X[0].layout();
    std::vector<Jet> hphi(n, Jet(L, 0.0));  // h^{kl} d_l phi
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) hphi[k] += ib.h_inv[k * n + l] * dphi(l);
    std::vector<Jet> ht(n * n), Bt(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        Jet s(L, 0.0);
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) s += dpsi(i, k) * ib.h_inv[k * n + l] * dpsi(j, l);
        ht[i * n + j] = s;
        ht[j * n + i] = s;
      }
      Jet b = dpsi(i, n);
      for (int k = 0; k < n; ++k) b += (ib.B[k] + hphi[k]) * dpsi(i, k);
      Bt[i] = b;
    }
    Jet Ft = ib.F + 2.0 * dphi(n);
    for (int k = 0; k < n; ++k) Ft += (2.0 * ib.B[k] + hphi[k]) * dphi(k);
    const std::vector<Jet> h_new = jet_inverse(ht, n);
    WalkerComponents out;
    std::vector<Jet> A_new(n, Jet(L, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A_new[i] -= h_new[i * n + j] * Bt[j];
    if (parts & kPartH) out.h = h_new;
    if (parts & kPartA) out.A = A_new;
    if (parts & kPartHH) {
      Jet H = -Ft;
      for (int i = 0; i < n; ++i) H -= A_new[i] * Bt[i];
      out.H = H;
    }
    return out;
  }

  std::shared_ptr<const CoordinateMap> map() const { return map_; }

 private:
  WalkerMetric w_;
  std::shared_ptr<const GaugeInverseMap> map_;
  SlotExprs derivs_;
};

void check_gauge(const WalkerMetric& w, const GaugeSpec& g) {
  if (static_cast<int>(g.psi.size()) != w.n()) throw std::invalid_argument("gauge needs n psi functions");
  if (g.phi.references(kXp)) throw PreconditionError("phi depends on xp");
  for (const Expr& p : g.psi)
    if (p.references(kXp)) throw PreconditionError("psi depends on xp");
}

}  // namespace

std::shared_ptr<const CoordinateMap> gauge_map(const WalkerMetric& w, const GaugeSpec& gauge) {
  check_gauge(w, gauge);
  return std::make_shared<GaugeInverseMap>(w, gauge);
}

WalkerMetric gauge_transform(const WalkerMetric& w, const GaugeSpec& gauge,
                             const std::vector<std::vector<double>>& check_points) {
  check_gauge(w, gauge);
  const int n = w.n();
  const SlotExprs psi(w, gauge.psi);
  for (const auto& p : check_points) {
    const std::vector<Jet> ps = psi(Jet::seed(p, 1));
    Matrix J(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) J(i, j) = ps[i].coeff(2 + j);
    const double det = J.determinant();
    if (!(std::abs(det) > 1e-12))
      throw PreconditionError("psi Jacobian is singular at a check point (det " + std::to_string(det) +
                              ")");
  }
  auto src = std::make_shared<GaugeSource>(w, gauge);
  WalkerForm form;
  form.xp_polynomial = w.form().xp_polynomial;
  form.xp_free = w.form().xp_free;
  return WalkerMetric(w.coords(), src, form, w.lambda());
}

WalkerMetric plus_shift(const WalkerMetric& w, const Expr& f) {
  if (!w.exprs()) throw PreconditionError("plus_shift needs a metric given by expressions");
  if (f.references(kXp)) throw PreconditionError("shift function depends on xp");
  WalkerExprs e = *w.exprs();
  for (int i = 0; i < w.n(); ++i) e.A[i] = e.A[i] + diff(f, w.coords()[i]);
  e.H = substitute(e.H, kXp, Expr::variable(kXp) + f) + 2.0 * diff(f, kXm);
  WalkerMetric out = WalkerMetric::from_exprs(w.coords(), std::move(e), w.lambda());
  return out;
}

Expr h1_kill_function(const WalkerMetric& w, double lambda) {
  if (lambda == 0.0)
    throw ZeroLambdaError("removing H1 by the x+ shift needs Lambda != 0 (Main Theorem hypothesis)");
  if (!w.exprs()) throw PreconditionError("the H1 shift needs a metric given by expressions");
  return h1_expr(*w.exprs()) * (-1.0 / (2.0 * lambda));
}

WalkerMetric plus_shift_kill_h1(const WalkerMetric& w, double lambda) {
  return plus_shift(w, h1_kill_function(w, lambda));
}

// ---------------------------------------------------------------- flows

namespace {

FlowResult finish_flow(const WalkerMetric& w, std::shared_ptr<FlowMap> map, const Box& box,
                       WalkerForm form, std::optional<double> lambda) {
  map->calibrate(probes_for(box, map->base_slice()));
  FlowResult r{map, pullback(w, map, form, lambda)};
  return r;
}

using Covector = std::function<std::vector<Jet>(std::span<const Jet>, const Jet&)>;

}  // namespace

FlowResult kill_A_flow(const WalkerMetric& w, double base_slice, const Box& box, FlowSettings settings) {
  VectorField field;
  if (!w.form().a_zero) field = make_field(w, nullptr);
  auto map = std::make_shared<FlowMap>(w.n(), field, nullptr, base_slice, box, settings);
  WalkerForm form = w.form();
  form.a_zero = true;
  return finish_flow(w, map, box, form, w.lambda());
}

FlowResult theorem1_flow(const WalkerMetric& w, const Expr& phi, double base_slice, const Box& box,
                         FlowSettings settings) {
  if (phi.references(kXp)) throw PreconditionError("phi depends on xp");
  if (phi.is_zero_literal()) return kill_A_flow(w, base_slice, box, settings);
  std::vector<Expr> grad;
  for (const auto& c : w.coords()) grad.push_back(diff(phi, c));
  const SlotExprs G(w, grad), P(w, {phi});
  Covector cov = [G](std::span<const Jet> y, const Jet& t) { return G(full_point(y, t)); };
  PlusShift plus = [P](std::span<const Jet> y, const Jet& t) { return -P(full_point(y, t))[0]; };
  auto map = std::make_shared<FlowMap>(w.n(), make_field(w, cov), plus, base_slice, box, settings);
  WalkerForm form;
  form.a_zero = true;
  form.xp_polynomial = w.form().xp_polynomial;
  form.xp_free = w.form().xp_free;
  return finish_flow(w, map, box, form, w.lambda());
}

FlowResult main_theorem_flow(const WalkerMetric& w, double lambda, double base_slice, const Box& box,
                             FlowSettings settings) {
  if (lambda == 0.0)
    throw ZeroLambdaError("the Main Theorem flow needs Lambda != 0 (W contains 1/(2 Lambda))");
  check_profile(w, lambda, box);
  Covector cov;
  PlusShift plus;
  const double s = 1.0 / (2.0 * lambda);
  if (w.exprs()) {
    const Expr H1 = h1_expr(*w.exprs());
    if (!H1.is_zero_literal()) {
      std::vector<Expr> grad;
      for (const auto& c : w.coords()) grad.push_back(diff(H1, c) * s);
      const SlotExprs G(w, grad), P(w, {H1 * (-s)});
      cov = [G](std::span<const Jet> y, const Jet& t) { return G(full_point(y, t)); };
      plus = [P](std::span<const Jet> y, const Jet& t) { return P(full_point(y, t))[0]; };
    }
  } else if (!w.form().h1_zero) {
    const ScalarFn H1 = [w](std::span<const Jet> y) { return h_profile_part(w, y, 1); };
    const int n = w.n();
    cov = [H1, n, s](std::span<const Jet> y, const Jet& t) {
      std::vector<Jet> yt(y.begin(), y.end());
      yt.push_back(t);
      std::vector<Jet> g = jet_gradient(H1, yt);
      g.resize(n);
      for (Jet& gi : g) gi *= s;
      return g;
    };
    plus = [H1, s](std::span<const Jet> y, const Jet& t) {
      std::vector<Jet> yt(y.begin(), y.end());
      yt.push_back(t);
      return H1(yt) * (-s);
    };
  }
  VectorField field;
  if (!w.form().a_zero || cov) field = make_field(w, cov);
  auto map = std::make_shared<FlowMap>(w.n(), field, plus, base_slice, box, settings);
  WalkerForm form;
  form.a_zero = true;
  form.h1_zero = true;
  form.xp_polynomial = true;
  return finish_flow(w, map, box, form, lambda);
}

FieldSups field_sups(const WalkerMetric& w, const std::vector<std::vector<double>>& points) {
  FieldSups s;
  const int N = w.dimension();
  const JetLayout& L = JetLayout::get(1, 1);
  for (const auto& p : points) {
    std::vector<Jet> x{Jet::variable(1, 1, 0, 0.0)};
    for (int a = 1; a < N; ++a) x.emplace_back(L, p[a]);
    const WalkerComponents c = w.components(x, kPartA | kPartHH);
    for (const Jet& a : c.A) s.A = std::max(s.A, std::abs(a.value()));
    s.H1 = std::max(s.H1, std::abs(c.H.coeff(1)));
    s.H0 = std::max(s.H0, std::abs(c.H.value()));
  }
  return s;
}

// ---------------------------------------------------------------- grid

GridFunction::GridFunction(std::vector<std::pair<double, double>> spatial, std::vector<int> counts,
                           std::vector<double> levels)
    : spatial_(std::move(spatial)), counts_(std::move(counts)), levels_(std::move(levels)) {
  nodes_ = 1;
  for (int c : counts_) nodes_ *= c;
  values_.assign(levels_.size(), std::vector<double>(nodes_, 0.0));
}

double GridFunction::spacing(int axis) const {
  return (spatial_[axis].second - spatial_[axis].first) / (counts_[axis] - 1);
}

std::vector<double> GridFunction::node(int index) const {
  std::vector<double> x(n());
  for (int a = n() - 1; a >= 0; --a) {
    const int i = index % counts_[a];
    index /= counts_[a];
    x[a] = spatial_[a].first + i * spacing(a);
  }
  return x;
}

namespace {

// Gradient of nodal values f at node `index`; central inside, one-sided
// three-point at the faces.
std::vector<double> grid_gradient(const std::vector<double>& f, const std::vector<int>& counts,
                                  const std::vector<double>& h, int index) {
  const int n = static_cast<int>(counts.size());
  std::vector<double> g(n);
  int stride = 1;
  std::vector<int> strides(n);
  for (int a = n - 1; a >= 0; --a) {
    strides[a] = stride;
    stride *= counts[a];
  }
  for (int a = 0; a < n; ++a) {
    const int i = (index / strides[a]) % counts[a];
    const int s = strides[a];
    if (i == 0)
      g[a] = (-3.0 * f[index] + 4.0 * f[index + s] - f[index + 2 * s]) / (2.0 * h[a]);
    else if (i == counts[a] - 1)
      g[a] = (3.0 * f[index] - 4.0 * f[index - s] + f[index - 2 * s]) / (2.0 * h[a]);
    else
      g[a] = (f[index + s] - f[index - s]) / (2.0 * h[a]);
  }
  return g;
}

// Derivative at t of the quadratic through (t0, f0), (t1, f1), (t2, f2).
double quad_derivative(double t, double t0, double t1, double t2, double f0, double f1, double f2) {
  return f0 * ((t - t1) + (t - t2)) / ((t0 - t1) * (t0 - t2)) +
         f1 * ((t - t0) + (t - t2)) / ((t1 - t0) * (t1 - t2)) +
         f2 * ((t - t0) + (t - t1)) / ((t2 - t0) * (t2 - t1));
}

}  // namespace

std::vector<double> GridFunction::gradient_at_node(int k, int index) const {
  std::vector<double> h(n());
  for (int a = 0; a < n(); ++a) h[a] = spacing(a);
  return grid_gradient(values_[k], counts_, h, index);
}

namespace {

// Lagrange weights on up to four consecutive nodes around x, shifted inward at the ends.
int stencil(std::span<const double> nodes, double x, double* w) {
  const int m = static_cast<int>(nodes.size());
  const int width = std::min(m, 4);
  const int cell = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
  const int start = std::clamp(cell - (width - 1) / 2, 0, m - width);
  for (int i = 0; i < width; ++i) {
    double l = 1.0;
    for (int j = 0; j < width; ++j)
      if (j != i) l *= (x - nodes[start + j]) / (nodes[start + i] - nodes[start + j]);
    w[i] = l;
  }
  return start;
}

}  // namespace

double GridFunction::interpolate(const std::function<double(int, int)>& f, std::span<const double> x,
                                 double t) const {
  const int d = n();
  double wt[4];
  const int k0 = stencil(levels_, t, wt);
  const int kw = std::min<int>(static_cast<int>(levels_.size()), 4);
  std::vector<int> start(d), width(d);
  std::vector<std::array<double, 4>> w(d);
  for (int a = 0; a < d; ++a) {
    std::vector<double> axis(counts_[a]);
    for (int i = 0; i < counts_[a]; ++i) axis[i] = spatial_[a].first + i * spacing(a);
    width[a] = std::min(counts_[a], 4);
    start[a] = stencil(axis, x[a], w[a].data());
  }
  double out = 0.0;
  std::vector<int> off(d, 0);
  while (true) {
    double weight = 1.0;
    int index = 0;
    for (int a = 0; a < d; ++a) {
      weight *= w[a][off[a]];
      index = index * counts_[a] + start[a] + off[a];
    }
    if (weight != 0.0) {
      double v = 0.0;
      for (int k = 0; k < kw; ++k) v += wt[k] * f(k0 + k, index);
      out += weight * v;
    }
    int a = d - 1;
    while (a >= 0 && ++off[a] == width[a]) off[a--] = 0;
    if (a < 0) break;
  }
  return out;
}

double GridFunction::value(std::span<const double> x, double t) const {
  return interpolate([this](int k, int i) { return values_[k][i]; }, x, t);
}

std::vector<double> GridFunction::gradient(std::span<const double> x, double t) const {
  std::vector<double> g(n());
  for (int a = 0; a < n(); ++a)
    g[a] = interpolate([this, a](int k, int i) { return gradient_at_node(k, i)[a]; }, x, t);
  return g;
}

double GridFunction::time_derivative(std::span<const double> x, double t) const {
  const int L = static_cast<int>(levels_.size());
  if (L < 3) throw GridError("time derivative needs at least three x- levels");
  return interpolate(
      [this, L](int k, int i) {
        const int c = std::clamp(k, 1, L - 2);
        return quad_derivative(levels_[k], levels_[c - 1], levels_[c], levels_[c + 1],
                               values_[c - 1][i], values_[c][i], values_[c + 1][i]);
      },
      x, t);
}

namespace {

struct LevelCoefficients {
  std::vector<double> H0, H1;
  std::vector<Matrix> hinv;
};

LevelCoefficients level_coefficients(const WalkerMetric& w, const GridFunction& grid, double t) {
  const int n = w.n();
  const JetLayout& L = JetLayout::get(1, 1);
  LevelCoefficients c;
  for (int i = 0; i < grid.nodes(); ++i) {
    const std::vector<double> x = grid.node(i);
    std::vector<Jet> p{Jet::variable(1, 1, 0, 0.0)};
    for (double v : x) p.emplace_back(L, v);
    p.emplace_back(L, t);
    const WalkerComponents comp = w.components(p, kPartH | kPartHH);
    Matrix h(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) h(a, b) = comp.h[a * n + b].value();
    c.hinv.push_back(h.inverse());
    c.H0.push_back(comp.H.value());
    c.H1.push_back(comp.H.coeff(1));
  }
  return c;
}

// d_- phi from the corrected equation
std::vector<double> phi_rate(const std::vector<double>& phi, const LevelCoefficients& c,
                             const GridFunction& grid, double lambda) {
  std::vector<double> h(grid.n());
  for (int a = 0; a < grid.n(); ++a) h[a] = grid.spacing(a);
  std::vector<double> r(phi.size());
  for (int i = 0; i < grid.nodes(); ++i) {
    const std::vector<double> g = grid_gradient(phi, grid.counts(), h, i);
    const Vector gv = Eigen::Map<const Vector>(g.data(), grid.n());
    const double grad2 = gv.dot(c.hinv[i] * gv);
    r[i] = 0.5 * (c.H0[i] - c.H1[i] * phi[i] + lambda * phi[i] * phi[i] - grad2);
  }
  return r;
}

GridFunction solve_phi(const WalkerMetric& w, double lambda, double base, const Box& box,
                       double delta, double tau, double bound) {
  const int n = w.n();
  std::vector<std::pair<double, double>> spatial(box.bounds.begin() + 1, box.bounds.begin() + 1 + n);
  std::vector<int> counts;
  for (const auto& [lo, hi] : spatial)
    counts.push_back(std::max(3, static_cast<int>(std::lround((hi - lo) / delta)) + 1));
  const auto [tlo, thi] = box.bounds.back();
  if (base < tlo || base > thi) throw GridError("base slice outside the x- range of the box");
  std::vector<double> levels;
  const int back = static_cast<int>(std::ceil((base - tlo) / tau - 1e-9));
  const int fwd = static_cast<int>(std::ceil((thi - base) / tau - 1e-9));
  for (int k = back; k >= 1; --k) levels.push_back(base - k * (base - tlo) / back);
  levels.push_back(base);
  for (int k = 1; k <= fwd; ++k) levels.push_back(base + k * (thi - base) / fwd);
  GridFunction grid(spatial, counts, levels);
  const int k0 = back;
  std::vector<LevelCoefficients> coef;
  for (double t : levels) coef.push_back(level_coefficients(w, grid, t));
  auto march = [&](int from, int to) {
    const double dt = levels[to] - levels[from];
    const std::vector<double>& phi = grid.level(from);
    const std::vector<double> r0 = phi_rate(phi, coef[from], grid, lambda);
    std::vector<double> pred(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) pred[i] = phi[i] + dt * r0[i];
    const std::vector<double> r1 = phi_rate(pred, coef[to], grid, lambda);
    std::vector<double>& next = grid.level(to);
    for (std::size_t i = 0; i < phi.size(); ++i) {
      next[i] = phi[i] + 0.5 * dt * (r0[i] + r1[i]);
      if (!std::isfinite(next[i]) || std::abs(next[i]) > bound)
        throw GridError("local solution left domain: |phi| exceeds " + std::to_string(bound) +
                        " at x- = " + std::to_string(levels[to]));
    }
  };
  for (int k = k0; k + 1 < static_cast<int>(levels.size()); ++k) march(k, k + 1);
  for (int k = k0; k > 0; --k) march(k, k - 1);
  return grid;
}

// psi flow dx/dt = h^{-1} grad phi; x+ = x~+ - phi. Jacobian by central differences.
class GridFlowMap : public CoordinateMap {
 public:
  GridFlowMap(WalkerMetric w, std::shared_ptr<const GridFunction> phi, double base, Box box, double step)
      : w_(std::move(w)), phi_(std::move(phi)), base_(base), box_(std::move(box)), step_(step) {}

  std::string kind() const override { return "flow"; }
  int dimension() const override { return w_.dimension(); }
  double base_slice() const override { return base_; }

  std::vector<double> velocity(std::span<const double> y, double t) const {
    const int n = w_.n();
    const std::vector<double> g = phi_->gradient(y, t);
    const Matrix hinv = h_at(y, t).inverse();
    const Vector v = hinv * Eigen::Map<const Vector>(g.data(), n);
    return {v.data(), v.data() + n};
  }

  Matrix h_at(std::span<const double> y, double t) const {
    const int n = w_.n();
    const JetLayout& L = JetLayout::get(0, 0);
    std::vector<Jet> p{Jet(L, 0.0)};
    for (double v : y) p.emplace_back(L, v);
    p.emplace_back(L, t);
    const WalkerComponents c = w_.components(p, kPartH);
    Matrix h(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) h(a, b) = c.h[a * n + b].value();
    return h;
  }

  std::vector<double> spatial(std::span<const double> xt) const {
    const int n = w_.n(), N = n + 2;
    std::vector<double> y(xt.begin() + 1, xt.begin() + 1 + n);
    const double t_end = xt[N - 1];
    const double span = t_end - base_;
    if (span == 0.0) return y;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) / step_ - 1e-9)));
    const double h = span / steps;
    auto add = [](std::vector<double> a, const std::vector<double>& b, double s) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
      return a;
    };
    for (int k = 0; k < steps; ++k) {
      const double t = base_ + k * h;
      const auto k1 = velocity(y, t);
      const auto k2 = velocity(add(y, k1, 0.5 * h), t + 0.5 * h);
      const auto k3 = velocity(add(y, k2, 0.5 * h), t + 0.5 * h);
      const auto k4 = velocity(add(y, k3, h), t + h);
      for (int i = 0; i < n; ++i) {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        const auto [lo, hi] = box_.bounds[1 + i];
        if (!std::isfinite(y[i]) || y[i] < lo || y[i] > hi)
          throw GridError("characteristic left the grid at x- = " + std::to_string(t + h));
      }
    }
    return y;
  }

  std::vector<double> point(std::span<const double> xt) const {
    const int n = w_.n(), N = n + 2;
    const std::vector<double> y = spatial(xt);
    std::vector<double> x(N);
    for (int i = 0; i < n; ++i) x[1 + i] = y[i];
    x[N - 1] = xt[N - 1];
    x[0] = xt[0] - phi_->value(y, xt[N - 1]);
    return x;
  }

  std::vector<Jet> taylor(std::span<const double> xt0, int order) const override {
    if (order > 1) throw PreconditionError("grid-based maps provide values and Jacobians only");
    const int N = dimension();
    const std::vector<double> x = point(xt0);
    std::vector<Jet> out;
    const JetLayout& L = JetLayout::get(N, order);
    for (int a = 0; a < N; ++a) out.emplace_back(L, x[a]);
    if (order == 1) {
      const double e = 1e-6;
      for (int b = 0; b < N; ++b) {
        std::vector<double> p(xt0.begin(), xt0.end()), m = p;
        p[b] += e;
        m[b] -= e;
        const std::vector<double> xp = point(p), xm = point(m);
        for (int a = 0; a < N; ++a) out[a].coeff(1 + b) = (xp[a] - xm[a]) / (2.0 * e);
      }
    }
    return out;
  }

  // H~0 at x~ by pullback: H(-phi, x) - 2(phi-dot + grad phi . V) + h(V, V).
  double h0_tilde(std::span<const double> xt) const {
    const int n = w_.n(), N = n + 2;
    const std::vector<double> y = spatial(xt);
    const double t = xt[N - 1];
    const double phi = phi_->value(y, t);
    const std::vector<double> g = phi_->gradient(y, t);
    const double phidot = phi_->time_derivative(y, t);
    const Matrix h = h_at(y, t);
    const Vector gv = Eigen::Map<const Vector>(g.data(), n);
    const Vector V = h.inverse() * gv;
    const JetLayout& L = JetLayout::get(0, 0);
    std::vector<Jet> p{Jet(L, -phi)};
    for (double v : y) p.emplace_back(L, v);
    p.emplace_back(L, t);
    const double H = w_.components(p, kPartHH).H.value();
    return H - 2.0 * (phidot + gv.dot(V)) + V.dot(h * V);
  }

 private:
  WalkerMetric w_;
  std::shared_ptr<const GridFunction> phi_;
  double base_;
  Box box_;
  double step_;
};

}  // namespace

Theorem2Result theorem2_phi(const WalkerMetric& w, double lambda, double base_slice, const Box& box,
                            Theorem2Settings settings) {
  if (!w.form().a_zero)
    throw PreconditionError("theorem2_phi requires A == 0 (syntactic check failed)");
  check_profile(w, lambda, box);
  auto phi = std::make_shared<GridFunction>(
      solve_phi(w, lambda, base_slice, box, settings.delta, settings.tau, settings.phi_bound));
  Theorem2Result r;
  if (settings.richardson_tol) {
    const GridFunction fine = solve_phi(w, lambda, base_slice, box, 0.5 * settings.delta,
                                        0.5 * settings.tau, settings.phi_bound);
    double est = 0.0;
    for (std::size_t k = 0; k < phi->levels().size(); ++k) {
      const double t = phi->levels()[k];
      for (int i = 0; i < phi->nodes(); ++i)
        est = std::max(est, std::abs(phi->level(k)[i] - fine.value(phi->node(i), t)));
    }
    est *= 4.0 / 3.0;
    r.richardson_estimate = est;
    if (est > *settings.richardson_tol)
      throw GridError("grid too coarse: Richardson estimate " + std::to_string(est) + " exceeds " +
                      std::to_string(*settings.richardson_tol));
  }
  const double tau = phi->levels().size() > 1 ? phi->levels()[1] - phi->levels()[0] : settings.tau;
  auto map = std::make_shared<GridFlowMap>(w, phi, base_slice, box, 0.5 * tau);
  r.points = sample_points(box.shrunk(settings.interior), settings.report_points, settings.seed);
  for (const auto& p : r.points) r.sup_h0_tilde = std::max(r.sup_h0_tilde, std::abs(map->h0_tilde(p)));
  r.phi = *phi;
  r.map = map;
  return r;
}

}  // namespace walkergeo
