#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "walkergeo/expr.h"
#include "walkergeo/geometry.h"
#include "walkergeo/jet.h"
#include "walkergeo/sampling.h"
#include "walkergeo/walker.h"

namespace walkergeo {

// A coordinate change realized as x(x~): old Walker coordinates as functions
// of the new ones, both ordered (x+, x^1..x^n, x-).
class CoordinateMap {
 public:
  virtual ~CoordinateMap() = default;

  virtual std::string kind() const = 0;  // "closed_form" or "flow"
  virtual int dimension() const = 0;
  virtual double base_slice() const { return 0.0; }
  // Taylor polynomial of x(x~) about xt0, in the displacement x~ - xt0;
  // layout (dimension, order).
  virtual std::vector<Jet> taylor(std::span<const double> xt0, int order) const = 0;

  // x(x~) evaluated on jets of any layout.
  std::vector<Jet> to_original(std::span<const Jet> xt) const;
  std::vector<double> to_original(std::span<const double> xt) const;
  // J(a, b) = dx^a / dx~^b
  Matrix jacobian(std::span<const double> xt) const;
  // x~(x) by Newton iteration started at x~ = x.
  std::vector<double> to_new(std::span<const double> x, double tol = 1e-12) const;
};

// Closed-form map; exprs[a] gives x^a in the new coordinates, which carry the
// same names as the old ones.
class ExprMap : public CoordinateMap {
 public:
  ExprMap(std::vector<std::string> names, std::vector<Expr> exprs,
          std::vector<std::pair<std::string, double>> params = {});
  std::string kind() const override { return "closed_form"; }
  int dimension() const override { return static_cast<int>(exprs_.size()); }
  std::vector<Jet> taylor(std::span<const double> xt0, int order) const override;
  const std::vector<Expr>& exprs() const { return exprs_; }

 private:
  std::vector<Expr> exprs_;
  std::vector<CompiledExpr> compiled_;
  std::vector<double> params_;
};

// Spatial jets y = (x^1..x^n) and x- jet t, one layout.
using VectorField = std::function<std::vector<Jet>(std::span<const Jet> y, const Jet& t)>;
using PlusShift = std::function<Jet(std::span<const Jet> y, const Jet& t)>;

struct FlowSettings {
  double step = 1e-2;        // initial RK4 step
  double agreement = 1e-9;   // Richardson halving stops when two steps agree to this
  int max_halvings = 10;
  double det_min = 1e-10;    // smallest admissible |det dx/dx~|
};

// x^i(x~) = y^i(x~-) where dy/dt = V(y, t), y(base) = x~^i; x- = x~-;
// x+ = x~+ + plus(y, x~-). An empty field gives the identity in x^i.
class FlowMap : public CoordinateMap {
 public:
  FlowMap(int n, VectorField field, PlusShift plus, double base_slice, Box box,
          FlowSettings settings = {});

  std::string kind() const override { return "flow"; }
  int dimension() const override { return n_ + 2; }
  double base_slice() const override { return base_; }
  std::vector<Jet> taylor(std::span<const double> xt0, int order) const override;

  // Richardson calibration of the step on value-only integrations; called by
  // the constructors in this header with probes in the half-size box.
  void calibrate(const std::vector<std::vector<double>>& probes);
  double step() const { return step_; }
  const FlowSettings& settings() const { return settings_; }
  const Box& box() const { return box_; }
  bool identity() const { return !field_; }

  // Value-only integration of the spatial flow from x~ to x~-.
  std::vector<double> integrate(std::span<const double> xt, double step) const;

 private:
  std::vector<Jet> integrate_jets(std::vector<Jet> y, double t_end, double step) const;

  int n_;
  VectorField field_;
  PlusShift plus_;
  double base_;
  Box box_;
  FlowSettings settings_;
  double step_;

  struct CacheEntry {
    std::vector<double> point;
    int order;
    std::vector<Jet> taylor;
  };
  mutable std::mutex cache_mutex_;
  mutable std::vector<CacheEntry> cache_;
};

// g~ = J^T g(x(x~)) J read as Walker data. `form` is declared by the caller.
WalkerMetric pullback(const WalkerMetric& w, std::shared_ptr<const CoordinateMap> map,
                      WalkerForm form, std::optional<double> lambda);
// Value-level oracle J^T g J at one point.
Matrix pullback_at(const MetricField& g, const CoordinateMap& map, std::span<const double> xt);

// Gradient (d_1..d_n, d_-) of a field along (x^1..x^n, x-) at jets y (spatial
// and x-, one layout), one order lower than y.
std::vector<Jet> jet_gradient(const ScalarFn& f, std::span<const Jet> y);

struct GaugeSpec {
  Expr phi;               // function of (x^1..x^n, x-)
  std::vector<Expr> psi;  // n functions of (x^1..x^n, x-)
  double c = 0.0;
};

// New data from the inverse-block rules, h~^{ij} = d_k psi^i h^{kl} d_l psi^j,
// B~^i = d_- psi^i + B^k d_k psi^i + h^{kl} d_k phi d_l psi^i,
// F~ = F + 2 d_- phi + 2 B^k d_k phi + h^{kl} d_k phi d_l phi.
// The psi-Jacobian is checked at `check_points` (full points).
WalkerMetric gauge_transform(const WalkerMetric& w, const GaugeSpec& gauge,
                             const std::vector<std::vector<double>>& check_points = {});
// x(x~) for a gauge; psi is inverted by Newton iteration.
std::shared_ptr<const CoordinateMap> gauge_map(const WalkerMetric& w, const GaugeSpec& gauge);

// A_i + d_i f, H(x+ + f) + 2 f-dot (equal to the H1/H0 replacement rules
// when H is quadratic in x+). Needs expression data.
WalkerMetric plus_shift(const WalkerMetric& w, const Expr& f);
// f = -H1 / (2 Lambda); ZeroLambdaError when Lambda = 0.
WalkerMetric plus_shift_kill_h1(const WalkerMetric& w, double lambda);
// -H1/(2 Lambda) as an expression.
Expr h1_kill_function(const WalkerMetric& w, double lambda);

struct FlowResult {
  std::shared_ptr<const FlowMap> map;
  WalkerMetric transformed;
};

// Box is the full (n+2)-box; probes come from its half-size copy.
FlowResult kill_A_flow(const WalkerMetric& w, double base_slice, const Box& box,
                       FlowSettings settings = {});
FlowResult theorem1_flow(const WalkerMetric& w, const Expr& phi, double base_slice, const Box& box,
                         FlowSettings settings = {});
FlowResult main_theorem_flow(const WalkerMetric& w, double lambda, double base_slice,
                             const Box& box, FlowSettings settings = {});

struct FieldSups {
  double A = 0.0;
  double H1 = 0.0;
  double H0 = 0.0;
};
// sup |A|, |H1|, |H0| over the points (x+ entries ignored).
FieldSups field_sups(const WalkerMetric& w, const std::vector<std::vector<double>>& points);

// Values of phi on a tensor grid over the spatial box, one array per x- level.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(std::vector<std::pair<double, double>> spatial, std::vector<int> counts,
               std::vector<double> levels);

  int n() const { return static_cast<int>(counts_.size()); }
  int nodes() const { return nodes_; }
  const std::vector<int>& counts() const { return counts_; }
  const std::vector<double>& levels() const { return levels_; }
  double spacing(int axis) const;
  std::vector<double> node(int index) const;
  std::vector<double>& level(int k) { return values_[k]; }
  const std::vector<double>& level(int k) const { return values_[k]; }

  // Second-order differences; one-sided at the grid boundary.
  std::vector<double> gradient_at_node(int k, int index) const;
  // Four-point Lagrange in each spatial axis and in x-.
  double value(std::span<const double> x, double t) const;
  std::vector<double> gradient(std::span<const double> x, double t) const;
  double time_derivative(std::span<const double> x, double t) const;

 private:
  double interpolate(const std::function<double(int k, int node)>& f, std::span<const double> x,
                     double t) const;

  std::vector<std::pair<double, double>> spatial_;
  std::vector<int> counts_;
  std::vector<double> levels_;
  int nodes_ = 0;
  std::vector<std::vector<double>> values_;
};

struct Theorem2Settings {
  double delta = 0.05;     // grid spacing target
  double tau = 0.025;      // x- step target
  double phi_bound = 1e3;  // |phi| beyond this counts as blow-up
  double interior = 0.5;   // report on the box shrunk by this factor
  int report_points = 100;
  std::uint64_t seed = 0;
  std::optional<double> richardson_tol;  // compare with the half-step grid
};

struct Theorem2Result {
  GridFunction phi;
  std::shared_ptr<const CoordinateMap> map;  // psi flow, x+ = x~+ - phi
  std::vector<std::vector<double>> points;   // report points (new coordinates)
  double sup_h0_tilde = 0.0;
  std::optional<double> richardson_estimate;
};

// Solves 2 d_- phi = H0 - H1 phi + Lambda phi^2 - h^{kl} d_k phi d_l phi with
// phi = 0 on the base slice (Heun in x-, central differences in space), then
// the psi flow dx/dx~- = h^{-1} grad phi, and evaluates H0~ by pullback.
Theorem2Result theorem2_phi(const WalkerMetric& w, double lambda, double base_slice, const Box& box,
                            Theorem2Settings settings = {});

}  // namespace walkergeo
