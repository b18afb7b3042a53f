#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "walkergeo/catalog.h"
#include "walkergeo/expr.h"
#include "walkergeo/jet.h"
#include "walkergeo/transform.h"
#include "walkergeo/walker.h"

namespace wg = walkergeo;

namespace {

const std::vector<std::string> kNames{"a", "b", "c"};
const char* kExpr = "exp(0.5*sin(a*b)) * cos(c - a^2) / (2 + cos(b*c)) + ln(1.5 + sin(a + c))";

void BM_ExprCompiledJet(benchmark::State& state) {
  const wg::CompiledExpr e(wg::Expr::parse(kExpr), kNames);
  const auto x = wg::Jet::seed(std::vector<double>{0.3, -0.2, 0.5}, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(e(x));
}
BENCHMARK(BM_ExprCompiledJet)->Arg(0)->Arg(1)->Arg(2);

void BM_ExprValue(benchmark::State& state) {
  const wg::CompiledExpr e(wg::Expr::parse(kExpr), kNames);
  const std::vector<double> p{0.3, -0.2, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(e.value(p));
}
BENCHMARK(BM_ExprValue);

void BM_PointResiduals(benchmark::State& state) {
  const wg::ExampleBundle b = wg::named_example("lewandowski_ex1");
  const std::vector<double> p{0.2, 0.1, -0.2, 0.4};
  for (auto _ : state) benchmark::DoNotOptimize(wg::point_residuals(b.input, b.lambda, p));
}
BENCHMARK(BM_PointResiduals);

void BM_EinsteinResidual100(benchmark::State& state) {
  const wg::ExampleBundle b = wg::named_example("kg_ex1");
  const auto pts = wg::sample_points(b.sample_box, 100, 0);
  for (auto _ : state) benchmark::DoNotOptimize(wg::einstein_residual(b.input, b.lambda, pts));
}
BENCHMARK(BM_EinsteinResidual100)->Unit(benchmark::kMillisecond);

void BM_MainTheoremFlow(benchmark::State& state) {
  const wg::ExampleBundle b = wg::named_example("lewandowski_ex2");
  const auto pts = wg::sample_points(b.sample_box, 20, 0);
  for (auto _ : state) {
    const wg::FlowResult r = wg::main_theorem_flow(b.input, b.lambda, b.base_slice, b.box);
    benchmark::DoNotOptimize(wg::field_sups(r.transformed, pts));
  }
}
BENCHMARK(BM_MainTheoremFlow)->Unit(benchmark::kMillisecond);

void BM_Theorem2Grid(benchmark::State& state) {
  wg::WalkerExprs e;
  for (const char* s : {"1", "0", "0", "1"}) e.h.push_back(wg::Expr::parse(s));
  e.A = {wg::Expr::number(0), wg::Expr::number(0)};
  e.H = wg::Expr::parse("xp^2 + xp*u*xm + u*v + 0.3*xm");
  const wg::WalkerMetric w = wg::WalkerMetric::from_exprs({"u", "v"}, e, 1.0);
  const wg::Box box{{{-1, 1}, {-0.6, 0.6}, {-0.6, 0.6}, {0, 0.4}}};
  wg::Theorem2Settings s;
  s.delta = 1.0 / static_cast<double>(state.range(0));
  s.tau = s.delta / 2;
  for (auto _ : state) benchmark::DoNotOptimize(wg::theorem2_phi(w, 1.0, 0.0, box, s).sup_h0_tilde);
}
BENCHMARK(BM_Theorem2Grid)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
