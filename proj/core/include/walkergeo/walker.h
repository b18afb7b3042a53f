#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "walkergeo/expr.h"
#include "walkergeo/geometry.h"
#include "walkergeo/jet.h"
#include "walkergeo/sampling.h"

namespace walkergeo {

// Structural facts about a Walker metric: read off the expressions when it is
// built from text, declared by the producer for composite metrics.
struct WalkerForm {
  bool a_zero = false;    // A == 0
  bool h0_zero = false;   // H has no x+-free part
  bool h1_zero = false;   // H has no part linear in x+
  bool xp_free = false;   // H does not depend on x+
  bool xp_polynomial = false;  // H is a polynomial in x+ of degree <= 2
};

// h is row-major n x n; any part not requested is left empty.
struct WalkerComponents {
  std::vector<Jet> h;
  std::vector<Jet> A;
  Jet H;
};

enum WalkerPart : unsigned { kPartH = 1u, kPartA = 2u, kPartHH = 4u, kPartAll = 7u };

// Evaluates (h, A, H) at coordinate jets ordered (x+, x^1..x^n, x-).
class WalkerSource {
 public:
  virtual ~WalkerSource() = default;
  virtual WalkerComponents evaluate(std::span<const Jet> x, unsigned parts) const = 0;
};

// Expression form of a metric, kept for export and syntactic checks.
struct WalkerExprs {
  std::vector<Expr> h;  // row-major n x n, symmetric
  std::vector<Expr> A;
  Expr H;
  std::vector<std::pair<std::string, double>> params;
};

class WalkerMetric {
 public:
  // coords are the n spatial names; "xp" and "xm" are reserved for x+ and x-.
  // Throws PreconditionError when h or A references xp.
  static WalkerMetric from_exprs(std::vector<std::string> coords, WalkerExprs exprs,
                                 std::optional<double> lambda = std::nullopt);

  WalkerMetric(std::vector<std::string> coords, std::shared_ptr<const WalkerSource> source,
               WalkerForm form, std::optional<double> lambda = std::nullopt);

  int n() const { return static_cast<int>(coords_.size()); }
  int dimension() const { return n() + 2; }
  const std::vector<std::string>& coords() const { return coords_; }
  // xp, coords..., xm
  std::vector<std::string> all_coords() const;
  std::optional<double> lambda() const { return lambda_; }
  const WalkerForm& form() const { return form_; }
  const WalkerExprs* exprs() const { return exprs_.get(); }
  const std::shared_ptr<const WalkerSource>& source() const { return source_; }

  WalkerMetric with_lambda(std::optional<double> lambda) const;

  // Throws SingularMetricError when h is not positive definite at the point.
  WalkerComponents components(std::span<const Jet> x, unsigned parts = kPartAll) const;

 private:
  std::vector<std::string> coords_;
  std::shared_ptr<const WalkerSource> source_;
  std::shared_ptr<const WalkerExprs> exprs_;
  WalkerForm form_;
  std::optional<double> lambda_;
};

// Syntactic classification of an expression as a polynomial of degree <= 2 in xp.
WalkerForm classify_h(const Expr& H);

// Full (n+2)-metric g with g_{+-} = 1, g_{ij} = h, g_{i-} = A_i, g_{--} = H.
class WalkerFullMetric : public MetricField {
 public:
  explicit WalkerFullMetric(WalkerMetric w) : w_(std::move(w)) {}
  int dimension() const override { return w_.dimension(); }
  std::vector<Jet> components(std::span<const Jet> x) const override;
  const WalkerMetric& walker() const { return w_; }

 private:
  WalkerMetric w_;
};

std::shared_ptr<const MetricField> assemble_full(const WalkerMetric& w);

// Inverse blocks: g^{++} = F, g^{+i} = B^i, g^{+-} = 1, g^{ij} = h^{ij}, others 0.
struct InverseBlocks {
  std::vector<Jet> h_inv;  // n x n
  std::vector<Jet> B;      // B = -h^{-1} A
  Jet F;                   // F + H + A.B = 0
};
InverseBlocks inverse_blocks(const WalkerComponents& c, int n);

// Inverse of a square jet matrix (Gauss-Jordan with partial pivoting on values).
std::vector<Jet> jet_inverse(std::span<const Jet> m, int n);

// Coefficient of (x+)^power of H at x+ = 0, as a jet over (x^1..x^n, x-);
// power 0 gives H0, 1 gives H1, 2 gives the x+^2 coefficient.
Jet h_profile_part(const WalkerMetric& w, std::span<const Jet> y, int power);

struct HProfile {
  double lambda_hat = 0.0;
  double cubic_residual = 0.0;
  ScalarFn H1;  // over (x^1..x^n, x-)
  ScalarFn H0;
};

// Points are full (n+2)-points; their x+ entries are replaced by the probes.
HProfile extract_profile(const WalkerMetric& w, std::span<const double> probe_xplus,
                         const std::vector<std::vector<double>>& points, double tol = 1e-8);

struct ResidualReport {
  std::string equation_id;
  std::vector<std::vector<double>> points;
  double sup_residual = 0.0;
  double tolerance = 1e-8;
  bool pass = true;
};

ResidualReport make_report(std::string id, const std::vector<std::vector<double>>& points,
                           double sup, double tol);

ResidualReport einstein_residual(const WalkerMetric& w, double lambda,
                                 const std::vector<std::vector<double>>& points, double tol = 1e-8);
std::vector<ResidualReport> residuals_general(const WalkerMetric& w, double lambda,
                                              const std::vector<std::vector<double>>& points,
                                              double tol = 1e-8);
std::vector<ResidualReport> residuals_A0(const WalkerMetric& w, double lambda,
                                         const std::vector<std::vector<double>>& points,
                                         double tol = 1e-8);
std::vector<ResidualReport> residuals_theorem2(const WalkerMetric& w, double lambda,
                                               const std::vector<std::vector<double>>& points,
                                               double tol = 1e-8);
std::vector<ResidualReport> residuals_ricciflat(const WalkerMetric& w,
                                                const std::vector<std::vector<double>>& points,
                                                double tol = 1e-8);
std::vector<ResidualReport> residuals_main(const WalkerMetric& w, double lambda,
                                           const std::vector<std::vector<double>>& points,
                                           double tol = 1e-8);
ResidualReport residual_strong(const WalkerMetric& w, const std::vector<std::vector<double>>& points,
                               double tol = 1e-8);

// Pointwise equation values, index-flattened (vectors/matrices row-major).
struct PointResiduals {
  double eq4 = 0.0;               // scalar equation of the general system
  std::vector<double> eq5;        // n
  double eq6 = 0.0;
  std::vector<double> ric_minus;  // n x n, Ric(h) - Lambda h
  double a0_scalar = 0.0;         // scalar equation, A == 0
  std::vector<double> a0_vector;  // d_i H1 + div hdot - d_i tr, A == 0
  double a0_h1 = 0.0;             // Laplacian H1 + Lambda tr
  double thm2_scalar = 0.0;       // scalar equation, A == 0 and H0 == 0
  double rf_scalar = 0.0;         // scalar equation, Lambda == 0 and H1 == 0
  std::vector<double> rf_vector;  // div hdot - d_i tr
  double main_scalar = 0.0;       // Laplacian H0 + h^{ij} hddot_ij / 2
  std::vector<double> main_div;   // div hdot
  double main_trace = 0.0;        // tr = h^{kl} hdot_kl
  std::vector<double> strong;     // n^3, (k, i, j)
  std::vector<double> strong_trace;  // n, sum_k strong(k, k, j)
};
PointResiduals point_residuals(const WalkerMetric& w, double lambda, std::span<const double> point);

struct CurvatureDecomposition {
  int n = 0;
  double lambda = 0.0;
  std::vector<double> v;   // components in the X_i frame
  std::vector<double> R0;  // R0(i,j,k,l) = g(R0(X_i,X_j)X_k, X_l)
  std::vector<double> P;   // P(i,j,k) = g(P(X_i)X_j, X_k)
  std::vector<double> T;   // T(i,j) = g(T(X_i), X_j)
  std::vector<double> gram;  // h at the point
  double reconstruction_error = 0.0;
};

// Curvature R = -R^std in the frame p = d+, X_i = d_i - A_i d+, q = d- - H/2 d+.
CurvatureDecomposition curvature_decomposition(const WalkerMetric& w, std::span<const double> point,
                                               double tol = 1e-8);
// Ric~(P)^m = h^{ik} h^{ml} P(i,k,l), components in the X_i frame.
std::vector<double> tric(const CurvatureDecomposition& d, std::span<const double> gram);

}  // namespace walkergeo
