#include "cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "walkergeo/catalog.h"
#include "walkergeo/errors.h"
#include "walkergeo/transform.h"

#ifndef WALKERGEO_VERSION
#define WALKERGEO_VERSION "0.0.0"
#endif

namespace walkergeo::cli {

using nlohmann::json;

namespace {

constexpr int kFormat = 1;

// 1-based line and column of a byte offset.
std::string line_col(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  const std::size_t line = 1 + std::count(text.begin(), text.begin() + offset, '\n');
  const std::size_t nl = text.rfind('\n', offset == 0 ? 0 : offset - 1);
  const std::size_t col = nl == std::string::npos ? offset + 1 : offset - nl;
  return std::to_string(line) + ":" + std::to_string(col);
}

// Location of a string value in the source, for messages about it.
std::string where(const std::string& text, const std::string& origin, const std::string& value) {
  const std::size_t pos = text.find(json(value).dump());
  return origin + ":" + (pos == std::string::npos ? std::string("?") : line_col(text, pos + 1));
}

bool valid_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

double number_at(const json& j, const std::string& what) {
  if (!j.is_number()) throw SpecError(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SpecError(what + " must be finite");
  return v;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MetricSpec parse_spec(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(origin + ":" + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw SpecError(origin + ": top level must be an object");
  static const std::set<std::string> known = {"format", "n", "coords", "lambda", "h", "A", "H",
                                              "box", "tolerance", "seed", "params"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw SpecError(origin + ": unknown key \"" + key + "\"");
  for (const char* key : {"n", "coords", "lambda", "h", "A", "H", "box"})
    if (!j.contains(key)) throw SpecError(origin + ": missing key \"" + std::string(key) + "\"");
  if (j.contains("format") && j["format"] != kFormat)
    throw SpecError(origin + ": unsupported format " + j["format"].dump());

  if (!j["n"].is_number_integer()) throw SpecError(origin + ": \"n\" must be an integer");
  const int n = j["n"].get<int>();
  if (n < 2) throw SpecError(origin + ": \"n\" must be at least 2");
  const json& jc = j["coords"];
  if (!jc.is_array() || static_cast<int>(jc.size()) != n)
    throw SpecError(origin + ": \"coords\" must list n names");
  std::vector<std::string> coords;
  for (const json& c : jc) {
    if (!c.is_string() || !valid_identifier(c.get<std::string>()))
      throw SpecError(origin + ": bad coordinate name " + c.dump());
    coords.push_back(c.get<std::string>());
  }
  std::set<std::string> all(coords.begin(), coords.end());
  if (static_cast<int>(all.size()) != n) throw SpecError(origin + ": coordinate names must be distinct");
  if (all.count("xp") || all.count("xm")) throw SpecError(origin + ": \"xp\" and \"xm\" are reserved");

  auto expr_at = [&](const json& v, const std::string& path) {
    if (!v.is_string()) throw SpecError(origin + ": " + path + " must be an expression string");
    const std::string s = v.get<std::string>();
    try {
      return Expr::parse(s);
    } catch (const ParseError& e) {
      throw SpecError(where(text, origin, s) + ": " + path + ": column " + std::to_string(e.offset() + 1) +
                      ": " + e.what());
    }
  };

  WalkerExprs ex;
  const json& jh = j["h"];
  if (!jh.is_array() || static_cast<int>(jh.size()) != n) throw SpecError(origin + ": \"h\" must have n rows");
  ex.h.assign(n * n, Expr());
  for (int i = 0; i < n; ++i) {
    const json& row = jh[i];
    // full rows (lower part may be null) or upper-triangle rows of length n - i
    if (!row.is_array() || (static_cast<int>(row.size()) != n && static_cast<int>(row.size()) != n - i))
      throw SpecError(origin + ": h[" + std::to_string(i) + "] must have n or n - i entries");
    const int off = static_cast<int>(row.size()) == n ? 0 : i;
    for (int k = 0; k < static_cast<int>(row.size()); ++k) {
      const int col = k + off;
      const std::string path = "h[" + std::to_string(i) + "][" + std::to_string(col) + "]";
      if (col < i) {
        if (row[k].is_null()) continue;
        const Expr lower = expr_at(row[k], path);
        if (!(lower == ex.h[col * n + i]))
          throw SpecError(origin + ": " + path + " differs from its transpose entry");
        continue;
      }
      ex.h[i * n + col] = expr_at(row[k], path);
      ex.h[col * n + i] = ex.h[i * n + col];
    }
  }
  const json& ja = j["A"];
  if (!ja.is_array() || static_cast<int>(ja.size()) != n) throw SpecError(origin + ": \"A\" must have n entries");
  for (int i = 0; i < n; ++i) ex.A.push_back(expr_at(ja[i], "A[" + std::to_string(i) + "]"));
  ex.H = expr_at(j["H"], "H");
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw SpecError(origin + ": \"params\" must be an object");
    for (const auto& [name, value] : j["params"].items()) {
      if (!valid_identifier(name) || all.count(name) || name == "xp" || name == "xm")
        throw SpecError(origin + ": bad parameter name \"" + name + "\"");
      ex.params.emplace_back(name, number_at(value, origin + ": params." + name));
    }
  }

  std::optional<double> lambda;
  if (!j["lambda"].is_null()) lambda = number_at(j["lambda"], origin + ": \"lambda\"");

  std::vector<std::string> names{"xp"};
  names.insert(names.end(), coords.begin(), coords.end());
  names.push_back("xm");
  Box box;
  const json& jb = j["box"];
  auto pair_at = [&](const json& p, const std::string& name) {
    if (!p.is_array() || p.size() != 2) throw SpecError(origin + ": box." + name + " must be [min, max]");
    const double lo = number_at(p[0], origin + ": box." + name), hi = number_at(p[1], origin + ": box." + name);
    if (!(lo < hi)) throw SpecError(origin + ": box." + name + " needs min < max");
    return std::pair<double, double>{lo, hi};
  };
  if (jb.is_array()) {
    if (jb.size() != names.size()) throw SpecError(origin + ": \"box\" needs n + 2 pairs (xp, coords, xm)");
    for (std::size_t a = 0; a < names.size(); ++a) box.bounds.push_back(pair_at(jb[a], names[a]));
  } else if (jb.is_object()) {
    for (const auto& name : names) {
      if (!jb.contains(name)) throw SpecError(origin + ": box is missing \"" + name + "\"");
      box.bounds.push_back(pair_at(jb[name], name));
    }
    if (jb.size() != names.size()) throw SpecError(origin + ": box has unknown coordinates");
  } else {
    throw SpecError(origin + ": \"box\" must be an array or an object");
  }

  std::optional<double> tolerance;
  if (j.contains("tolerance")) {
    tolerance = number_at(j["tolerance"], origin + ": \"tolerance\"");
    if (*tolerance <= 0) throw SpecError(origin + ": \"tolerance\" must be positive");
  }
  std::optional<std::uint64_t> seed;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw SpecError(origin + ": \"seed\" must be a non-negative integer");
    seed = j["seed"].get<std::uint64_t>();
  }

  try {
    WalkerMetric w = WalkerMetric::from_exprs(coords, std::move(ex), lambda);
    return MetricSpec{std::move(w), lambda, std::move(box), tolerance, seed, fnv1a_hex(text)};
  } catch (const PreconditionError& e) {
    throw SpecError(origin + ": " + e.what());
  } catch (const UnboundVariableError& e) {
    throw SpecError(where(text, origin, e.name()) + ": unknown name \"" + e.name() + "\"");
  }
}

MetricSpec load_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str(), path);
}

json export_spec(const WalkerMetric& w, std::optional<double> lambda, const Box& box,
                 std::optional<std::uint64_t> seed) {
  if (!w.exprs()) throw PreconditionError("only metrics given by expressions can be exported");
  const WalkerExprs& e = *w.exprs();
  const int n = w.n();
  json j;
  j["format"] = kFormat;
  j["n"] = n;
  j["coords"] = w.coords();
  j["lambda"] = lambda ? json(*lambda) : json(nullptr);
  json h = json::array();
  for (int i = 0; i < n; ++i) {
    json row = json::array();
    for (int k = i; k < n; ++k) row.push_back(e.h[i * n + k].to_string());
    h.push_back(row);
  }
  j["h"] = h;
  json a = json::array();
  for (const Expr& x : e.A) a.push_back(x.to_string());
  j["A"] = a;
  j["H"] = e.H.to_string();
  if (!e.params.empty()) {
    json p = json::object();
    for (const auto& [name, value] : e.params) p[name] = value;
    j["params"] = p;
  }
  json b = json::array();
  for (const auto& [lo, hi] : box.bounds) b.push_back({lo, hi});
  j["box"] = b;
  if (seed) j["seed"] = *seed;
  return j;
}

namespace {

struct Options {
  int points = 100;
  double tol = 1e-8;
  bool tol_given = false;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dump_map;
  bool timing = false;
};

json result_entry(const ResidualReport& r, std::uint64_t seed) {
  return json{{"equation_id", r.equation_id}, {"sup_residual", r.sup_residual}, {"tolerance", r.tolerance},
              {"pass", r.pass}, {"n_points", r.points.size()}, {"seed", seed}};
}

json check_entry(const std::string& id, double sup, double tol, std::size_t points, std::uint64_t seed) {
  return json{{"equation_id", id}, {"sup_residual", sup}, {"tolerance", tol},
              {"pass", std::isfinite(sup) && sup <= tol}, {"n_points", points}, {"seed", seed}};
}

json header(const std::string& command, const std::string& digest, std::uint64_t seed) {
  return json{{"format", kFormat}, {"tool", "walkergeo"}, {"version", WALKERGEO_VERSION},
              {"command", command}, {"input_digest", "fnv1a64:" + digest}, {"seed", seed},
              {"wall_time", nullptr}};
}

bool all_pass(const json& results) {
  return std::all_of(results.begin(), results.end(), [](const json& r) { return r["pass"].get<bool>(); });
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SpecError(path + ": cannot write");
  f << text;
  if (!f) throw SpecError(path + ": write failed");
}

int emit(json report, const Options& o, std::chrono::steady_clock::time_point t0, std::ostream& out) {
  if (o.timing) report["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string text = report.dump(2) + "\n";
  if (o.out.empty())
    out << text;
  else
    write_text(o.out, text);
  return report["pass"].get<bool>() ? kPass : kFail;
}

// Spatial half-box with the full x+ and x- ranges: flows started there stay
// inside the declared box for the catalog metrics.
Box flow_sample_box(const Box& box) {
  Box s = box.shrunk(0.5);
  s.bounds.front() = box.bounds.front();
  s.bounds.back() = box.bounds.back();
  return s;
}

double sup_component_diff(const WalkerMetric& a, const WalkerMetric& b, const std::vector<std::vector<double>>& pts) {
  double err = 0.0;
  for (const auto& p : pts) {
    const auto ca = a.components(Jet::seed(p, 0)), cb = b.components(Jet::seed(p, 0));
    for (std::size_t k = 0; k < ca.h.size(); ++k) err = std::max(err, std::abs(ca.h[k].value() - cb.h[k].value()));
    for (std::size_t k = 0; k < ca.A.size(); ++k) err = std::max(err, std::abs(ca.A[k].value() - cb.A[k].value()));
    err = std::max(err, std::abs(ca.H.value() - cb.H.value()));
  }
  return err;
}

double sup_map_diff(const CoordinateMap& a, const CoordinateMap& b, const std::vector<std::vector<double>>& pts) {
  double err = 0.0;
  for (const auto& p : pts) {
    const auto xa = a.to_original(std::span<const double>(p)), xb = b.to_original(std::span<const double>(p));
    for (std::size_t k = 0; k < xa.size(); ++k) err = std::max(err, std::abs(xa[k] - xb[k]));
  }
  return err;
}

json sups_json(const FieldSups& s) { return json{{"sup_A", s.A}, {"sup_H1", s.H1}, {"sup_H0", s.H0}}; }

void dump_map(const CoordinateMap& map, const std::vector<std::vector<double>>& pts, const std::string& path) {
  json samples = json::array();
  for (const auto& p : pts) {
    const Matrix J = map.jacobian(p);
    json jj = json::array();
    for (int a = 0; a < J.rows(); ++a) {
      json row = json::array();
      for (int b = 0; b < J.cols(); ++b) row.push_back(J(a, b));
      jj.push_back(row);
    }
    samples.push_back(json{{"x_new", p}, {"x", map.to_original(std::span<const double>(p))}, {"J", jj}});
  }
  write_text(path, json{{"format", kFormat}, {"kind", map.kind()}, {"samples", samples}}.dump(2) + "\n");
}

double need_lambda(const MetricSpec& s, const std::string& what) {
  if (!s.lambda) throw PreconditionError(what + " needs \"lambda\" in the spec file");
  return *s.lambda;
}

int cmd_residuals(const std::string& file, const std::string& system, Options o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const MetricSpec s = load_spec(file);
  const std::uint64_t seed = o.seed.value_or(s.seed.value_or(0));
  const double tol = o.tol_given ? o.tol : s.tolerance.value_or(o.tol);
  const auto pts = sample_points(s.box, o.points, seed);
  std::vector<ResidualReport> reps;
  if (system == "full") reps = residuals_general(s.metric, need_lambda(s, system), pts, tol);
  else if (system == "a0") reps = residuals_A0(s.metric, need_lambda(s, system), pts, tol);
  else if (system == "theorem2") reps = residuals_theorem2(s.metric, need_lambda(s, system), pts, tol);
  else if (system == "ricciflat") reps = residuals_ricciflat(s.metric, pts, tol);
  else if (system == "main") reps = residuals_main(s.metric, need_lambda(s, system), pts, tol);
  else if (system == "strong") reps = {residual_strong(s.metric, pts, tol)};
  else reps = {einstein_residual(s.metric, need_lambda(s, system), pts, tol)};
  json results = json::array();
  for (const auto& r : reps) results.push_back(result_entry(r, seed));
  json report = header("residuals", s.digest, seed);
  report["system"] = system;
  report["results"] = results;
  report["pass"] = all_pass(results);
  return emit(report, o, t0, out);
}

int cmd_transform(const std::string& file, const std::string& mode, Options o, const Theorem2Settings& t2,
                  double grid_tol, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const MetricSpec s = load_spec(file);
  const std::uint64_t seed = o.seed.value_or(s.seed.value_or(0));
  const double base = s.box.bounds.back().first;
  const FlowSettings flow;
  const double post_tol = 10.0 * flow.agreement;
  const auto pts = sample_points(flow_sample_box(s.box), o.points, seed);
  json report = header("transform", s.digest, seed);
  report["mode"] = mode;
  report["pre"] = sups_json(field_sups(s.metric, pts));
  json results = json::array();
  json map_info;
  if (mode == "theorem2") {
    Theorem2Settings st = t2;
    st.report_points = o.points;
    st.seed = seed;
    const Theorem2Result r = theorem2_phi(s.metric, need_lambda(s, mode), base, s.box, st);
    results.push_back(check_entry("post.sup_H0_tilde", r.sup_h0_tilde, grid_tol, r.points.size(), seed));
    report["post"] = json{{"sup_H0", r.sup_h0_tilde}};
    map_info = json{{"kind", r.map->kind()}, {"delta", st.delta}, {"tau", st.tau}, {"base_slice", base}};
    if (r.richardson_estimate) map_info["richardson_estimate"] = *r.richardson_estimate;
    if (!o.dump_map.empty()) dump_map(*r.map, r.points, o.dump_map);
  } else if (mode == "plus-shift") {
    const WalkerMetric w = plus_shift_kill_h1(s.metric, need_lambda(s, mode));
    const FieldSups post = field_sups(w, pts);
    report["post"] = sups_json(post);
    results.push_back(check_entry("post.sup_H1", post.H1, post_tol, pts.size(), seed));
    const Expr f = h1_kill_function(s.metric, *s.lambda);
    map_info = json{{"kind", "closed_form"}, {"plus_shift", f.to_string()}};
    if (!o.dump_map.empty()) {
      std::vector<std::string> names{"xp"};
      names.insert(names.end(), s.metric.coords().begin(), s.metric.coords().end());
      names.push_back("xm");
      std::vector<Expr> xs;
      for (const auto& nm : names) xs.push_back(Expr::variable(nm));
      xs[0] = xs[0] + f;  // x+ = x~+ + f
      dump_map(ExprMap(names, xs, s.metric.exprs()->params), pts, o.dump_map);
    }
  } else {
    FlowResult r = mode == "main" ? main_theorem_flow(s.metric, need_lambda(s, mode), base, s.box, flow)
                                  : kill_A_flow(s.metric, base, s.box, flow);
    const FieldSups post = field_sups(r.transformed, pts);
    report["post"] = sups_json(post);
    results.push_back(check_entry("post.sup_A", post.A, post_tol, pts.size(), seed));
    if (mode == "main") results.push_back(check_entry("post.sup_H1", post.H1, post_tol, pts.size(), seed));
    if (s.lambda) {
      const ResidualReport before = einstein_residual(s.metric, *s.lambda, pts, o.tol);
      if (before.pass) {
        ResidualReport after = einstein_residual(r.transformed, *s.lambda, pts, o.tol);
        after.equation_id = "post.einstein";
        results.push_back(result_entry(after, seed));
      }
    }
    map_info = json{{"kind", r.map->kind()}, {"identity", r.map->identity()}, {"step", r.map->step()},
                    {"base_slice", base}};
    if (!o.dump_map.empty()) dump_map(*r.map, pts, o.dump_map);
  }
  report["map"] = map_info;
  report["results"] = results;
  report["pass"] = all_pass(results);
  return emit(report, o, t0, out);
}

int cmd_verify_example(const std::string& name, Options o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExampleBundle b = named_example(name);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto pts = sample_points(b.sample_box, o.points, seed);
  json stages = json::array();
  json results = json::array();
  // one stage passes when all of its checks pass
  auto stage = [&](const std::string& id, std::vector<json> checks, json extra = json::object()) {
    bool pass = true;
    for (json& c : checks) {
      pass = pass && c["pass"].get<bool>();
      results.push_back(std::move(c));
    }
    extra["stage"] = id;
    extra["pass"] = pass;
    stages.push_back(extra);
  };
  const ResidualReport in = einstein_residual(b.input, b.lambda, pts, o.tol);
  stage("input_einstein", {check_entry("input_einstein", in.sup_residual, o.tol, pts.size(), seed)},
        {{"provenance", provenance_name(b.input_provenance)}});

  FlowResult r = b.flow == "main" ? main_theorem_flow(b.input, b.lambda, b.base_slice, b.box)
                                  : kill_A_flow(b.input, b.base_slice, b.box);
  const FieldSups post = field_sups(r.transformed, pts);
  const double post_tol = 10.0 * r.map->settings().agreement;
  std::vector<json> post_checks{check_entry("transformation.sup_A", post.A, post_tol, pts.size(), seed)};
  if (b.flow == "main") post_checks.push_back(check_entry("transformation.sup_H1", post.H1, post_tol, pts.size(), seed));
  stage("transformation", post_checks, {{"flow", b.flow}, {"step", r.map->step()}});

  // closed forms: the reference map and metric decide; alternatives are reported
  json forms = json::array();
  const bool cas_map = b.maps.front().provenance == Provenance::kPaperCorrected;
  const double map_tol = cas_map ? 1e-5 : 1e-6;
  const double metric_tol = 1e-6;
  std::vector<json> closed;
  for (std::size_t k = 0; k < b.maps.size(); ++k) {
    const auto& m = b.maps[k];
    const double err = sup_map_diff(*r.map, *m.map, pts);
    if (k == 0) closed.push_back(check_entry("closed_form.map", err, map_tol, pts.size(), seed));
    forms.push_back(json{{"piece", "map"}, {"label", m.label}, {"provenance", provenance_name(m.provenance)},
                         {"sup_diff", err}, {"agrees", err <= map_tol}, {"reference", k == 0}, {"note", m.note}});
  }
  for (std::size_t k = 0; k < b.transformed.size(); ++k) {
    const auto& m = b.transformed[k];
    const double err = sup_component_diff(r.transformed, m.metric, pts);
    if (k == 0) closed.push_back(check_entry("closed_form.metric", err, metric_tol, pts.size(), seed));
    forms.push_back(json{{"piece", "metric"}, {"label", m.label}, {"provenance", provenance_name(m.provenance)},
                         {"sup_diff", err}, {"agrees", err <= metric_tol}, {"reference", k == 0}, {"note", m.note}});
  }
  json extra{{"forms", forms}};
  if (cas_map) extra["cross_validation"] = "CAS closed form checked against the integrator; reference is the corrected form";
  stage("closed_form", closed, extra);

  const ResidualReport outr = einstein_residual(r.transformed, b.lambda, pts, o.tol);
  stage("transformed_einstein", {check_entry("transformed_einstein", outr.sup_residual, o.tol, pts.size(), seed)});

  json report = header("verify-example", fnv1a_hex(name), seed);
  report["example"] = name;
  report["lambda"] = b.lambda;
  report["notes"] = b.notes;
  report["stages"] = stages;
  report["results"] = results;
  report["pass"] = all_pass(results);
  return emit(report, o, t0, out);
}

int cmd_export_example(const std::string& name, const Options& o, std::ostream& out) {
  const ExampleBundle b = named_example(name);
  const std::string text = export_spec(b.input, b.lambda, b.box, o.seed).dump(2) + "\n";
  if (o.out.empty())
    out << text;
  else
    write_text(o.out, text);
  return kPass;
}

json vec_json(const std::vector<double>& v) { return json(v); }

int cmd_decompose(const std::string& file, const std::vector<std::string>& at, Options o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const MetricSpec s = load_spec(file);
  const std::uint64_t seed = o.seed.value_or(s.seed.value_or(0));
  const double tol = o.tol_given ? o.tol : s.tolerance.value_or(o.tol);
  std::vector<std::vector<double>> pts;
  for (const auto& text : at) {
    std::vector<double> p;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        p.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw SpecError("--at: bad number \"" + item + "\"");
      }
    }
    if (static_cast<int>(p.size()) != s.metric.dimension())
      throw SpecError("--at needs " + std::to_string(s.metric.dimension()) + " comma-separated numbers");
    pts.push_back(p);
  }
  if (pts.empty()) pts = sample_points(s.box, o.points, seed);
  json list = json::array();
  double worst_rec = 0.0, worst_lambda = 0.0;
  for (const auto& p : pts) {
    const CurvatureDecomposition d = curvature_decomposition(s.metric, p, tol);
    worst_rec = std::max(worst_rec, d.reconstruction_error);
    if (s.lambda) worst_lambda = std::max(worst_lambda, std::abs(d.lambda + *s.lambda));
    list.push_back(json{{"point", p}, {"lambda", d.lambda}, {"v", vec_json(d.v)}, {"R0", vec_json(d.R0)},
                        {"P", vec_json(d.P)}, {"T", vec_json(d.T)}, {"gram", vec_json(d.gram)},
                        {"reconstruction_error", d.reconstruction_error}});
  }
  json results = json::array();
  results.push_back(check_entry("ricci_reconstruction", worst_rec, tol, pts.size(), seed));
  if (s.lambda) results.push_back(check_entry("lambda_plus_Lambda", worst_lambda, tol, pts.size(), seed));
  json report = header("decompose", s.digest, seed);
  report["decompositions"] = list;
  report["results"] = results;
  report["pass"] = all_pass(results);
  return emit(report, o, t0, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Walker metric residuals, coordinate transformations and worked examples", "walkergeo"};
  app.set_version_flag("--version", WALKERGEO_VERSION);
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* c) {
    c->add_option("--points", o.points, "Number of sample points")->check(CLI::PositiveNumber);
    c->add_option("--tol", o.tol, "Residual tolerance")->check(CLI::PositiveNumber);
    c->add_option("--seed", o.seed, "Sampling seed");
    c->add_option("--out", o.out, "Write the report here instead of stdout");
    c->add_flag("--timing", o.timing, "Record wall time in the report");
  };
  std::string file, system = "einstein", mode, name;
  std::vector<std::string> at;
  Theorem2Settings t2;
  double grid_tol = 1e-3;

  CLI::App* res = app.add_subcommand("residuals", "Residuals of one equation system");
  res->add_option("file", file, "Metric spec (JSON)")->required();
  res->add_option("--system", system, "System to check")
      ->check(CLI::IsMember({"full", "a0", "theorem2", "ricciflat", "main", "strong", "einstein"}));
  common(res);

  CLI::App* tr = app.add_subcommand("transform", "Coordinate transformation with post-condition checks");
  tr->add_option("file", file, "Metric spec (JSON)")->required();
  tr->add_option("--mode", mode, "Transformation")
      ->required()
      ->check(CLI::IsMember({"kill-a", "main", "theorem2", "plus-shift"}));
  tr->add_option("--dump-map", o.dump_map, "Write sampled (x~, x, J) triples here");
  tr->add_option("--delta", t2.delta, "theorem2 grid spacing")->check(CLI::PositiveNumber);
  tr->add_option("--tau", t2.tau, "theorem2 x- step")->check(CLI::PositiveNumber);
  tr->add_option("--grid-tol", grid_tol, "theorem2 bound on sup |H~0|")->check(CLI::PositiveNumber);
  common(tr);

  CLI::App* ve = app.add_subcommand("verify-example", "Run the pipeline on a catalog example");
  ve->add_option("name", name, "Example name")->required();
  common(ve);

  CLI::App* ex = app.add_subcommand("export-example", "Write the input metric of a catalog example as a spec");
  ex->add_option("name", name, "Example name")->required();
  ex->add_option("--seed", o.seed, "Seed recorded in the spec");
  ex->add_option("--out", o.out, "Output path");

  CLI::App* de = app.add_subcommand("decompose", "Curvature decomposition at points");
  de->add_option("file", file, "Metric spec (JSON)")->required();
  de->add_option("--at", at, "Point as comma-separated coordinates (repeatable)");
  common(de);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kBadInput;
  }
  for (CLI::App* c : {res, tr, de, ve})
    if (c->parsed()) o.tol_given = c->count("--tol") > 0;

  try {
    if (res->parsed()) return cmd_residuals(file, system, o, out);
    if (tr->parsed()) return cmd_transform(file, mode, o, t2, grid_tol, out);
    if (ve->parsed()) return cmd_verify_example(name, o, out);
    if (ex->parsed()) return cmd_export_example(name, o, out);
    if (de->parsed()) return cmd_decompose(file, at, o, out);
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const FlowError& e) {
    err << "flow error: " << e.what() << "\n";
    return kFlowEscape;
  } catch (const ZeroLambdaError& e) {
    err << "error: " << e.what() << "\n";
    return kZeroLambda;
  } catch (const GridError& e) {
    err << "grid error: " << e.what() << "\n";
    return kGridFailure;
  } catch (const UnknownExampleError& e) {
    err << "error: " << e.what() << "; known examples:";
    for (const auto& n : example_names()) err << " " << n;
    err << "\n";
    return kUnknownExample;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kPrecondition;
  }
  return kBadInput;
}

}  // namespace walkergeo::cli
