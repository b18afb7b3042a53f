#include "walkergeo/walker.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "walkergeo/errors.h"

namespace walkergeo {
namespace {

constexpr const char* kXp = "xp";
constexpr const char* kXm = "xm";

class ExprWalkerSource : public WalkerSource {
 public:
  ExprWalkerSource(const std::vector<std::string>& coords, const WalkerExprs& e) : n_(coords.size()) {
    std::vector<std::string> slots;
    slots.push_back(kXp);
    slots.insert(slots.end(), coords.begin(), coords.end());
    slots.push_back(kXm);
    for (const auto& [name, value] : e.params) {
      slots.push_back(name);
      params_.push_back(value);
    }
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) h_.emplace_back(e.h[i * n_ + j], slots);
    for (int i = 0; i < n_; ++i) A_.emplace_back(e.A[i], slots);
    H_ = CompiledExpr(e.H, slots);
  }

  WalkerComponents evaluate(std::span<const Jet> x, unsigned parts) const override {
    std::vector<Jet> slots(x.begin(), x.end());
    for (double p : params_) slots.emplace_back(x[0].layout(), p);
    WalkerComponents c;
    if (parts & kPartH) {
      c.h.resize(n_ * n_);
      int k = 0;
      for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j) {
          c.h[i * n_ + j] = h_[k++](slots);
          if (i != j) c.h[j * n_ + i] = c.h[i * n_ + j];
        }
    }
    if (parts & kPartA)
      for (int i = 0; i < n_; ++i) c.A.push_back(A_[i](slots));
    if (parts & kPartHH) c.H = H_(slots);
    return c;
  }

 private:
  int n_;
  std::vector<double> params_;
  std::vector<CompiledExpr> h_, A_;
  CompiledExpr H_;
};

// Bit k set: the expression may contain terms of degree k in xp. ok=false
// when xp appears non-polynomially.
struct DegreeSet {
  bool ok = true;
  unsigned mask = 0;
};

DegreeSet sumset(DegreeSet a, DegreeSet b) {
  if (!a.ok || !b.ok) return {false, 0};
  DegreeSet r;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; i + j < 16; ++j)
      if ((a.mask >> i & 1u) && (b.mask >> j & 1u)) r.mask |= 1u << (i + j);
  return r;
}

DegreeSet xp_degrees(const Node& n) {
  switch (n.kind) {
    case NodeKind::kNumber: return {true, n.number == 0.0 ? 0u : 1u};
    case NodeKind::kVariable: return {true, n.name == kXp ? 2u : 1u};
    case NodeKind::kNeg: return xp_degrees(*n.lhs);
    case NodeKind::kAdd:
    case NodeKind::kSub: {
      DegreeSet a = xp_degrees(*n.lhs), b = xp_degrees(*n.rhs);
      return {a.ok && b.ok, a.mask | b.mask};
    }
    case NodeKind::kMul: return sumset(xp_degrees(*n.lhs), xp_degrees(*n.rhs));
    case NodeKind::kDiv: {
      DegreeSet b = xp_degrees(*n.rhs);
      if (!b.ok || (b.mask & ~1u)) return {false, 0};
      return xp_degrees(*n.lhs);
    }
    case NodeKind::kPow: {
      DegreeSet a = xp_degrees(*n.lhs);
      if (!a.ok) return a;
      if (!(a.mask & ~1u)) return a;
      if (n.number < 0 || std::floor(n.number) != n.number || n.number > 15) return {false, 0};
      DegreeSet r{true, 1u};
      for (int k = 0; k < static_cast<int>(n.number); ++k) r = sumset(r, a);
      return r;
    }
    case NodeKind::kCall: {
      DegreeSet a = xp_degrees(*n.lhs);
      if (!a.ok || (a.mask & ~1u)) return {false, 0};
      return {true, 1u};
    }
  }
  return {false, 0};
}

}  // namespace

WalkerForm classify_h(const Expr& H) {
  const DegreeSet d = xp_degrees(H.root());
  WalkerForm f;
  if (!d.ok) return f;
  f.xp_polynomial = (d.mask & ~7u) == 0;
  if (!f.xp_polynomial) return f;
  f.h0_zero = !(d.mask & 1u);
  f.h1_zero = !(d.mask & 2u);
  f.xp_free = (d.mask & ~1u) == 0;
  return f;
}

WalkerMetric WalkerMetric::from_exprs(std::vector<std::string> coords, WalkerExprs exprs,
                                      std::optional<double> lambda) {
  const int n = static_cast<int>(coords.size());
  if (n < 2) throw PreconditionError("Walker metric needs n >= 2 spatial coordinates");
  for (const auto& c : coords)
    if (c == kXp || c == kXm) throw PreconditionError("coordinate name '" + c + "' is reserved");
  if (static_cast<int>(exprs.h.size()) != n * n || static_cast<int>(exprs.A.size()) != n)
    throw std::invalid_argument("Walker data has wrong shape");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) exprs.h[i * n + j] = exprs.h[j * n + i];
  for (int k = 0; k < n * n; ++k)
    if (exprs.h[k].references(kXp))
      throw PreconditionError("h[" + std::to_string(k / n) + "][" + std::to_string(k % n) +
                              "] depends on xp");
  bool a_zero = true;
  for (int i = 0; i < n; ++i) {
    if (exprs.A[i].references(kXp))
      throw PreconditionError("A[" + std::to_string(i) + "] depends on xp");
    a_zero = a_zero && exprs.A[i].is_zero_literal();
  }
  WalkerForm form = classify_h(exprs.H);
  form.a_zero = a_zero;
  auto source = std::make_shared<ExprWalkerSource>(coords, exprs);
  WalkerMetric w(std::move(coords), source, form, lambda);
  w.exprs_ = std::make_shared<const WalkerExprs>(std::move(exprs));
  return w;
}

WalkerMetric::WalkerMetric(std::vector<std::string> coords,
                           std::shared_ptr<const WalkerSource> source, WalkerForm form,
                           std::optional<double> lambda)
    : coords_(std::move(coords)), source_(std::move(source)), form_(form), lambda_(lambda) {}

std::vector<std::string> WalkerMetric::all_coords() const {
  std::vector<std::string> all{kXp};
  all.insert(all.end(), coords_.begin(), coords_.end());
  all.push_back(kXm);
  return all;
}

WalkerMetric WalkerMetric::with_lambda(std::optional<double> lambda) const {
  WalkerMetric w = *this;
  w.lambda_ = lambda;
  return w;
}

WalkerComponents WalkerMetric::components(std::span<const Jet> x, unsigned parts) const {
  if (static_cast<int>(x.size()) != dimension())
    throw std::invalid_argument("Walker metric point has wrong dimension");
  WalkerComponents c = source_->evaluate(x, parts);
  if (parts & kPartH) {
    const int m = n();
    Matrix h(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) h(i, j) = c.h[i * m + j].value();
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) {
      std::string at;
      for (const Jet& xi : x) at += (at.empty() ? "" : ", ") + std::to_string(xi.value());
      throw SingularMetricError("h is not positive definite at (" + at + ")");
    }
  }
  return c;
}

std::vector<Jet> WalkerFullMetric::components(std::span<const Jet> x) const {
  const int n = w_.n(), N = n + 2;
  WalkerComponents c = w_.components(x);
  const JetLayout& L = x[0].layout();
  std::vector<Jet> g(N * N, Jet(L, 0.0));
  g[0 * N + (N - 1)] = Jet(L, 1.0);
  g[(N - 1) * N + 0] = Jet(L, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g[(1 + i) * N + (1 + j)] = c.h[i * n + j];
    g[(1 + i) * N + (N - 1)] = c.A[i];
    g[(N - 1) * N + (1 + i)] = c.A[i];
  }
  g[(N - 1) * N + (N - 1)] = c.H;
  return g;
}

std::shared_ptr<const MetricField> assemble_full(const WalkerMetric& w) {
  return std::make_shared<WalkerFullMetric>(w);
}

std::vector<Jet> jet_inverse(std::span<const Jet> m, int n) {
  std::vector<Jet> a(m.begin(), m.end());
  const JetLayout& L = a[0].layout();
  std::vector<Jet> inv(n * n, Jet(L, 0.0));
  for (int i = 0; i < n; ++i) inv[i * n + i] = Jet(L, 1.0);
  double scale = 0.0;
  for (const Jet& x : a) scale = std::max(scale, std::abs(x.value()));
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col].value()) > std::abs(a[piv * n + col].value())) piv = r;
    if (!(std::abs(a[piv * n + col].value()) > 1e-14 * scale))
      throw SingularMetricError("singular matrix in jet inversion");
    if (piv != col)
      for (int k = 0; k < n; ++k) {
        std::swap(a[col * n + k], a[piv * n + k]);
        std::swap(inv[col * n + k], inv[piv * n + k]);
      }
    const Jet r = reciprocal(a[col * n + col]);
    for (int k = 0; k < n; ++k) {
      a[col * n + k] = a[col * n + k] * r;
      inv[col * n + k] = inv[col * n + k] * r;
    }
    for (int row = 0; row < n; ++row) {
      if (row == col) continue;
      const Jet f = a[row * n + col];
      if (f.value() == 0.0 && f.is_constant()) continue;
      for (int k = 0; k < n; ++k) {
        a[row * n + k] -= f * a[col * n + k];
        inv[row * n + k] -= f * inv[col * n + k];
      }
    }
  }
  return inv;
}

InverseBlocks inverse_blocks(const WalkerComponents& c, int n) {
  InverseBlocks b;
  b.h_inv = jet_inverse(c.h, n);
  const JetLayout& L = c.h[0].layout();
  b.B.assign(n, Jet(L, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b.B[i] -= b.h_inv[i * n + j] * c.A[j];
  b.F = -c.H;
  for (int i = 0; i < n; ++i) b.F -= c.A[i] * b.B[i];
  return b;
}

Jet h_profile_part(const WalkerMetric& w, std::span<const Jet> y, int power) {
  const int d = y[0].dim(), K = y[0].order();
  std::vector<int> map(d);
  for (int i = 0; i < d; ++i) map[i] = i;
  std::vector<Jet> x;
  x.push_back(Jet::variable(d + 1, K + power, d, 0.0));
  for (const Jet& yi : y) x.push_back(yi.embedded(d + 1, K + power, map));
  const Jet H = w.components(x, kPartHH).H;
  return H.slice(d, power, K);
}

HProfile extract_profile(const WalkerMetric& w, std::span<const double> probe_xplus,
                         const std::vector<std::vector<double>>& points, double tol) {
  if (probe_xplus.size() < 3) throw std::invalid_argument("profile extraction needs >= 3 probes");
  const int N = w.dimension();
  const JetLayout& L = JetLayout::get(1, 2);
  std::vector<double> c2;
  for (const auto& p : points) {
    for (double xp : probe_xplus) {
      std::vector<Jet> x;
      x.push_back(Jet::variable(1, 2, 0, xp));
      for (int a = 1; a < N; ++a) x.emplace_back(L, p[a]);
      c2.push_back(w.components(x, kPartHH).H.coeff(2));
    }
  }
  HProfile prof;
  double sum = 0.0;
  for (double c : c2) sum += c;
  prof.lambda_hat = c2.empty() ? 0.0 : sum / c2.size();
  for (double c : c2) prof.cubic_residual = std::max(prof.cubic_residual, std::abs(c - prof.lambda_hat));
  if (!(prof.cubic_residual <= tol))
    throw ProfileError("H not quadratic in x+ (cubic residual " + std::to_string(prof.cubic_residual) +
                       ")");
  prof.H1 = [w](std::span<const Jet> y) { return h_profile_part(w, y, 1); };
  prof.H0 = [w](std::span<const Jet> y) { return h_profile_part(w, y, 0); };
  return prof;
}

ResidualReport make_report(std::string id, const std::vector<std::vector<double>>& points,
                           double sup, double tol) {
  ResidualReport r;
  r.equation_id = std::move(id);
  r.points = points;
  r.sup_residual = sup;
  r.tolerance = tol;
  r.pass = sup <= tol;
  return r;
}

ResidualReport einstein_residual(const WalkerMetric& w, double lambda,
                                 const std::vector<std::vector<double>>& points, double tol) {
  const WalkerFullMetric g(w);
  double sup = 0.0;
  for (const auto& p : points) {
    const PointFrameData fd = frame_data(g, p);
    const Matrix r = ricci(fd) - lambda * fd.g;
    sup = std::max(sup, r.cwiseAbs().maxCoeff());
  }
  return make_report("einstein", points, sup, tol);
}

PointResiduals point_residuals(const WalkerMetric& w, double lambda, std::span<const double> point) {
  const int n = w.n(), mv = n + 1;
  auto sp = [](int i) { return 1 + i; };
  std::vector<double> at(point.begin(), point.end());
  at[0] = 0.0;
  const std::vector<Jet> X2 = Jet::seed(at, 2);
  const std::vector<Jet> X3 = Jet::seed(at, 3);
  // H first: map-backed sources cache the higher-order expansion
  const Jet H = w.components(X3, kPartHH).H;
  const WalkerComponents c = w.components(X2, kPartH | kPartA);
  const Jet H0 = H.truncated(2);
  const Jet H1 = H.partial(0);  // x+-derivatives of H0/H1 are never read

  const std::vector<Jet>& h = c.h;
  const std::vector<Jet>& A = c.A;
  const std::vector<Jet> hinv = jet_inverse(h, n);
  auto I2 = [n](int i, int j) { return i * n + j; };
  auto I3 = [n](int a, int b, int c) { return (a * n + b) * n + c; };

  std::vector<Jet> hinv1(n * n), hdot(n * n), hinv_dot(n * n), dh(n * n * n);
  for (int k = 0; k < n * n; ++k) {
    hinv1[k] = hinv[k].truncated(1);
    hdot[k] = h[k].partial(mv);
    hinv_dot[k] = hinv[k].partial(mv);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) dh[I3(i, j, k)] = h[I2(i, j)].partial(sp(k));
  // Gamma^k_ij, order 1
  std::vector<Jet> G(n * n * n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        Jet s(dh[0].layout(), 0.0);
        for (int l = 0; l < n; ++l)
          s += hinv1[I2(k, l)] * (dh[I3(l, j, i)] + dh[I3(i, l, j)] - dh[I3(i, j, l)]);
        s *= 0.5;
        G[I3(k, i, j)] = s;
        G[I3(k, j, i)] = s;
      }
  auto hv = [&](int i, int j) { return hinv[I2(i, j)].value(); };
  auto Gv = [&](int k, int i, int j) { return G[I3(k, i, j)].value(); };

  auto laplacian = [&](const Jet& f) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double t = f.hessian(sp(i), sp(j));
        for (int k = 0; k < n; ++k) t -= Gv(k, i, j) * f.gradient(sp(k));
        s += hv(i, j) * t;
      }
    return s;
  };
  auto divergence_of = [&](const std::vector<Jet>& om) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double t = om[j].gradient(sp(i));
        for (int k = 0; k < n; ++k) t -= Gv(k, i, j) * om[k].value();
        s += hv(i, j) * t;
      }
    return s;
  };
  // h^{jk} nabla_k S_ij for a symmetric or antisymmetric order-1 jet tensor S.
  auto div2 = [&](const std::vector<Jet>& S, int i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double t = S[I2(i, j)].gradient(sp(k));
        for (int l = 0; l < n; ++l)
          t -= Gv(l, k, i) * S[I2(l, j)].value() + Gv(l, k, j) * S[I2(i, l)].value();
        s += hv(j, k) * t;
      }
    return s;
  };

  // Ricci of h(x-)
  std::vector<double> ric(n * n, 0.0);
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      double s = 0.0;
      for (int a = 0; a < n; ++a) {
        // R^a_bad = d_a G^a_db - d_d G^a_ab + G^a_ae G^e_db - G^a_de G^e_ab
        s += G[I3(a, d, b)].gradient(sp(a)) - G[I3(a, a, b)].gradient(sp(d));
        for (int e = 0; e < n; ++e) s += Gv(a, a, e) * Gv(e, d, b) - Gv(a, d, e) * Gv(e, a, b);
      }
      ric[I2(b, d)] = s;
    }

  // traces and contractions
  Jet tr(hdot[0].layout(), 0.0);  // h^{jk} hdot_jk, order 1
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) tr += hinv1[I2(j, k)] * hdot[I2(j, k)];
  double hdd = 0.0, hdhd = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      hdd += hv(i, j) * h[I2(i, j)].hessian(mv, mv);
      hdhd += hinv_dot[I2(i, j)].value() * hdot[I2(i, j)].value();
    }
  const double trv = tr.value();
  const double h1 = H1.value();

  std::vector<Jet> A1(n), Adot(n);
  for (int i = 0; i < n; ++i) {
    A1[i] = A[i].truncated(1);
    Adot[i] = A[i].partial(mv);
  }
  std::vector<Jet> F(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) F[I2(i, j)] = A[j].partial(sp(i)) - A[i].partial(sp(j));
  std::vector<double> Aup(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Aup[i] += hv(i, j) * A[j].value();
  double FF = 0.0, AdH1 = 0.0, AA = 0.0;
  for (int i = 0; i < n; ++i) {
    AdH1 += Aup[i] * H1.gradient(sp(i));
    AA += Aup[i] * A[i].value();
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          FF += hv(i, k) * hv(j, l) * F[I2(k, l)].value() * F[I2(i, j)].value();
  }
  const double divA = divergence_of(A1);
  const double divAdot = divergence_of(Adot);
  const double lapH0 = laplacian(H0);
  const double lapH1 = laplacian(H1);

  PointResiduals r;
  r.eq4 = lapH0 - 0.5 * FF - 2.0 * AdH1 - h1 * divA + 2.0 * lambda * AA - 2.0 * divAdot +
          0.5 * hdhd + hdd + 0.5 * trv * h1;
  r.eq6 = lapH1 - 2.0 * lambda * divA + lambda * trv;
  r.a0_scalar = lapH0 + 0.5 * hdhd + hdd + 0.5 * trv * h1;
  r.a0_h1 = lapH1 + lambda * trv;
  r.thm2_scalar = 0.5 * hdhd + hdd + 0.5 * trv * h1;
  r.rf_scalar = lapH0 + 0.5 * hdhd + hdd;
  r.main_scalar = lapH0 + 0.5 * hdd;
  r.main_trace = trv;
  r.eq5.resize(n);
  r.a0_vector.resize(n);
  r.rf_vector.resize(n);
  r.main_div.resize(n);
  for (int i = 0; i < n; ++i) {
    const double divF = div2(F, i);
    const double divhd = div2(hdot, i);
    const double dtr = tr.gradient(sp(i));
    const double dH1 = H1.gradient(sp(i));
    r.eq5[i] = divF + dH1 - 2.0 * lambda * A[i].value() + divhd - dtr;
    r.a0_vector[i] = dH1 + divhd - dtr;
    r.rf_vector[i] = divhd - dtr;
    r.main_div[i] = divhd;
  }
  r.ric_minus.resize(n * n);
  for (int k = 0; k < n * n; ++k) r.ric_minus[k] = ric[k] - lambda * h[k].value();

  // nabla_i (h^{kt} hdot_tj) - 2 dGamma^k_ij / dx-
  std::vector<Jet> M(n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) {
      Jet s(hdot[0].layout(), 0.0);
      for (int t = 0; t < n; ++t) s += hinv1[I2(k, t)] * hdot[I2(t, j)];
      M[I2(k, j)] = s;
    }
  r.strong.assign(n * n * n, 0.0);
  r.strong_trace.assign(n, 0.0);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double t = M[I2(k, j)].gradient(sp(i));
        for (int l = 0; l < n; ++l)
          t += Gv(k, i, l) * M[I2(l, j)].value() - Gv(l, i, j) * M[I2(k, l)].value();
        t -= 2.0 * G[I3(k, i, j)].gradient(mv);
        r.strong[I3(k, i, j)] = t;
        if (k == i) r.strong_trace[j] += t;
      }
  return r;
}

namespace {

double sup_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

void require_profile(const WalkerMetric& w, double lambda, const std::vector<std::vector<double>>& pts) {
  const double probes[] = {-1.0, 0.0, 1.0};
  const HProfile p = extract_profile(w, probes, pts, 1e-8 * std::max(1.0, std::abs(lambda)));
  if (std::abs(p.lambda_hat - lambda) > 1e-8 * std::max(1.0, std::abs(lambda)))
    throw ProfileError("x+^2 coefficient of H is " + std::to_string(p.lambda_hat) +
                       ", declared Lambda is " + std::to_string(lambda));
}

template <class Pick>
std::vector<ResidualReport> collect(const WalkerMetric& w, double lambda,
                                    const std::vector<std::vector<double>>& points, double tol,
                                    const std::vector<std::string>& ids, Pick pick) {
  std::vector<double> sup(ids.size(), 0.0);
  for (const auto& p : points) {
    const PointResiduals r = point_residuals(w, lambda, p);
    const std::vector<double> vals = pick(r);
    for (std::size_t k = 0; k < ids.size(); ++k) sup[k] = std::max(sup[k], vals[k]);
  }
  std::vector<ResidualReport> out;
  for (std::size_t k = 0; k < ids.size(); ++k) out.push_back(make_report(ids[k], points, sup[k], tol));
  return out;
}

}  // namespace

std::vector<ResidualReport> residuals_general(const WalkerMetric& w, double lambda,
                                              const std::vector<std::vector<double>>& points,
                                              double tol) {
  require_profile(w, lambda, points);
  return collect(w, lambda, points, tol, {"eq4.8", "eq4.9", "eq4.10", "eq4.11"},
                 [](const PointResiduals& r) {
                   return std::vector<double>{std::abs(r.eq4), sup_abs(r.eq5), std::abs(r.eq6),
                                              sup_abs(r.ric_minus)};
                 });
}

std::vector<ResidualReport> residuals_A0(const WalkerMetric& w, double lambda,
                                         const std::vector<std::vector<double>>& points, double tol) {
  if (!w.form().a_zero) throw PreconditionError("system a0 requires A == 0 (syntactic check failed)");
  require_profile(w, lambda, points);
  return collect(w, lambda, points, tol, {"eq8", "eq9", "eq10", "eq11"}, [](const PointResiduals& r) {
    return std::vector<double>{std::abs(r.a0_scalar), sup_abs(r.a0_vector), std::abs(r.a0_h1),
                               sup_abs(r.ric_minus)};
  });
}

std::vector<ResidualReport> residuals_theorem2(const WalkerMetric& w, double lambda,
                                               const std::vector<std::vector<double>>& points,
                                               double tol) {
  if (!w.form().a_zero)
    throw PreconditionError("system theorem2 requires A == 0 (syntactic check failed)");
  if (!w.form().h0_zero)
    throw PreconditionError("system theorem2 requires H = Lambda xp^2 + xp H1 with H0 == 0 "
                            "(syntactic check failed)");
  require_profile(w, lambda, points);
  return collect(w, lambda, points, tol, {"eq12", "eq13", "eq14", "eq15"},
                 [](const PointResiduals& r) {
                   return std::vector<double>{std::abs(r.thm2_scalar), sup_abs(r.a0_vector),
                                              std::abs(r.a0_h1), sup_abs(r.ric_minus)};
                 });
}

std::vector<ResidualReport> residuals_ricciflat(const WalkerMetric& w,
                                                const std::vector<std::vector<double>>& points,
                                                double tol) {
  if (!w.form().a_zero)
    throw PreconditionError("system ricciflat requires A == 0 (syntactic check failed)");
  if (!w.form().xp_free)
    throw PreconditionError("system ricciflat requires H independent of xp (syntactic check failed)");
  return collect(w, 0.0, points, tol, {"eq4.8B", "eq4.9B", "eq4.11B"}, [](const PointResiduals& r) {
    return std::vector<double>{std::abs(r.rf_scalar), sup_abs(r.rf_vector), sup_abs(r.ric_minus)};
  });
}

std::vector<ResidualReport> residuals_main(const WalkerMetric& w, double lambda,
                                           const std::vector<std::vector<double>>& points,
                                           double tol) {
  if (!w.form().a_zero) throw PreconditionError("system main requires A == 0 (syntactic check failed)");
  if (!w.form().h1_zero)
    throw PreconditionError("system main requires H = Lambda xp^2 + H0 with H1 == 0 "
                            "(syntactic check failed)");
  require_profile(w, lambda, points);
  return collect(w, lambda, points, tol, {"eq16", "eq17", "eq18", "eq19"},
                 [](const PointResiduals& r) {
                   return std::vector<double>{std::abs(r.main_scalar), sup_abs(r.main_div),
                                              std::abs(r.main_trace), sup_abs(r.ric_minus)};
                 });
}

ResidualReport residual_strong(const WalkerMetric& w, const std::vector<std::vector<double>>& points,
                               double tol) {
  if (!w.form().a_zero)
    throw PreconditionError("strong residual requires A == 0 (syntactic check failed)");
  double sup = 0.0;
  for (const auto& p : points) sup = std::max(sup, sup_abs(point_residuals(w, 0.0, p).strong));
  return make_report("eq4.9strong", points, sup, tol);
}

CurvatureDecomposition curvature_decomposition(const WalkerMetric& w, std::span<const double> point,
                                               double tol) {
  const int n = w.n(), N = n + 2;
  const WalkerFullMetric full(w);
  const PointFrameData fd = frame_data(full, point);
  const Array4 Rs = riemann(fd);
  const Matrix ric = ricci(fd);
  const Matrix& g = fd.g;

  // frame vectors as coordinate columns: 0 = p, 1..n = X_i, n+1 = q
  Matrix E = Matrix::Zero(N, N);
  E(0, 0) = 1.0;
  for (int i = 0; i < n; ++i) {
    E(1 + i, 1 + i) = 1.0;
    E(0, 1 + i) = -g(1 + i, N - 1);
  }
  E(N - 1, N - 1) = 1.0;
  E(0, N - 1) = -0.5 * g(N - 1, N - 1);

  // Rl(a,b,c,d) = g(R(e_a, e_b) e_c, e_d) with R = -R^std
  Array4 Rl(N);
  {
    // Rstd_low(m,c,d,b) = g_{m a} R^a_{b c d} in coordinates
    Array4 low(N);
    for (int m = 0; m < N; ++m)
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < N; ++c)
          for (int d = 0; d < N; ++d) {
            double s = 0.0;
            for (int a = 0; a < N; ++a) s += g(m, a) * Rs(a, b, c, d);
            low(m, b, c, d) = s;
          }
    // g(R^std(X,Y)Z, W) = low(m, b, c, d) W^m Z^b X^c Y^d
    Array4 t1(N), t2(N);
    for (int m = 0; m < N; ++m)
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < N; ++c)
          for (int D = 0; D < N; ++D) {
            double s = 0.0;
            for (int d = 0; d < N; ++d) s += low(m, b, c, d) * E(d, D);
            t1(m, b, c, D) = s;
          }
    for (int m = 0; m < N; ++m)
      for (int b = 0; b < N; ++b)
        for (int C = 0; C < N; ++C)
          for (int D = 0; D < N; ++D) {
            double s = 0.0;
            for (int c = 0; c < N; ++c) s += t1(m, b, c, D) * E(c, C);
            t2(m, b, C, D) = s;
          }
    for (int m = 0; m < N; ++m)
      for (int B = 0; B < N; ++B)
        for (int C = 0; C < N; ++C)
          for (int D = 0; D < N; ++D) {
            double s = 0.0;
            for (int b = 0; b < N; ++b) s += t2(m, b, C, D) * E(b, B);
            t1(m, B, C, D) = s;
          }
    for (int M = 0; M < N; ++M)
      for (int B = 0; B < N; ++B)
        for (int C = 0; C < N; ++C)
          for (int D = 0; D < N; ++D) {
            double s = 0.0;
            for (int m = 0; m < N; ++m) s += t1(m, B, C, D) * E(m, M);
            // Rl(x, y, z, w) = g(R(x,y)z, w) = -g(R^std(x,y)z, w)
            Rl(C, D, B, M) = -s;
          }
  }

  const int p = 0, q = N - 1;
  auto X = [](int i) { return 1 + i; };
  Matrix gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = g(1 + i, 1 + j);
  const Matrix ginv = checked_inverse(gram, "h");

  CurvatureDecomposition d;
  d.n = n;
  d.lambda = Rl(p, q, p, q);
  d.v.assign(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d.v[i] -= ginv(i, j) * Rl(p, q, q, X(j));
  d.R0.assign(n * n * n * n, 0.0);
  d.P.assign(n * n * n, 0.0);
  d.T.assign(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      d.T[i * n + j] = -Rl(X(i), q, q, X(j));
      for (int k = 0; k < n; ++k) {
        d.P[(i * n + j) * n + k] = Rl(X(i), q, X(j), X(k));
        for (int l = 0; l < n; ++l) d.R0[((i * n + j) * n + k) * n + l] = Rl(X(i), X(j), X(k), X(l));
      }
    }
  d.gram.assign(gram.data(), gram.data() + n * n);

  // Ricci reconstruction in the frame
  const Matrix ricF = E.transpose() * ric * E;
  const std::vector<double> rt = tric(d, d.gram);
  double err = std::abs(ricF(p, q) + d.lambda);
  err = std::max(err, std::abs(ricF(p, p)));
  double scale = std::max(1.0, ricF.cwiseAbs().maxCoeff());
  double trT = 0.0;
  for (int i = 0; i < n; ++i) {
    err = std::max(err, std::abs(ricF(p, X(i))));
    double rxq = 0.0;
    for (int j = 0; j < n; ++j) rxq += gram(i, j) * (rt[j] - d.v[j]);
    err = std::max(err, std::abs(ricF(X(i), q) - rxq));
    for (int j = 0; j < n; ++j) {
      trT += ginv(i, j) * d.T[i * n + j];
      double r0 = 0.0;
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) r0 += ginv(k, l) * d.R0[((i * n + k) * n + j) * n + l];
      err = std::max(err, std::abs(ricF(X(i), X(j)) - r0));
    }
  }
  err = std::max(err, std::abs(ricF(q, q) - trT));
  d.reconstruction_error = err;
  if (!(err <= tol * scale))
    throw ReconstructionError("Ricci reconstruction mismatch " + std::to_string(err));
  return d;
}

std::vector<double> tric(const CurvatureDecomposition& d, std::span<const double> gram) {
  const int n = d.n;
  Matrix h(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) h(i, j) = gram[i * n + j];
  const Matrix hinv = checked_inverse(h, "gram matrix");
  std::vector<double> out(n, 0.0);
  for (int m = 0; m < n; ++m)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) out[m] += hinv(i, k) * hinv(m, l) * d.P[(i * n + k) * n + l];
  return out;
}

}  // namespace walkergeo
