#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinglass/app/config.hpp"
#include "spinglass/app/report.hpp"
#include "spinglass/cascade.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/instances.hpp"
#include "spinglass/montecarlo.hpp"
#include "spinglass/optimizer.hpp"

namespace spinglass::app {

enum ExitCode : int { kOk = 0, kError = 1, kDegenerate = 2 };

struct RunResult {
  int exit_code = kOk;
  json body;
  std::string csv;  // filled when the task and format produce a table
};

namespace detail {

inline PathSearchConfig search_config(const RunConfig& c) {
  PathSearchConfig s = c.search;
  s.seed = c.seed_or_zero();
  s.workers = c.workers;
  return s;
}

inline DiscretePath default_path(const RunConfig& c) { return c.path ? *c.path : single_level_path(c.q); }

inline RunResult run_evaluate(const RunConfig& c) {
  RunResult out;
  const DiscretePath path = default_path(c);
  out.body["path"] = path_json(path);
  if (c.lambda) {
    const ParisiObjective obj(path, c.q, c.h, c.mixture);
    const auto b = obj.evaluate(c.lambda->matrix());
    const SymMatrix g = obj.gradient(c.lambda->matrix());
    out.body["lambda"] = matrix_json(c.lambda->matrix());
    out.body["breakdown"] = breakdown_json(b);
    out.body["total"] = b.total;
    out.body["gradient"] = matrix_json(g);
    out.body["gradient_norm"] = g.norm();
    return out;
  }
  if (c.q.is_degenerate()) {
    const auto cert = detect_degenerate(c.q, path, c.h, c.mixture);
    out.body["degenerate"] = true;
    out.body["certificate"] = certificate_json(cert);
    out.exit_code = kDegenerate;
    return out;
  }
  const auto inner = inner_minimize(path, c.q, c.h, c.mixture, c.search.inner);
  out.body["inner"] = inner_json(inner);
  out.body["total"] = inner.value;
  return out;
}

inline std::string minimize_csv(const OptimizationReport& r) {
  std::ostringstream os;
  os << "r,value,best\n";
  for (const auto& l : r.per_level) os << l.r << "," << format_csv_double(l.value) << "," << (l.r == r.best_level ? 1 : 0) << "\n";
  return os.str();
}

inline RunResult run_minimize(const RunConfig& c) {
  RunResult out;
  const auto report = minimize_over_paths(c.q, c.h, c.mixture, search_config(c));
  out.body = optimization_json(report);
  out.csv = minimize_csv(report);
  if (report.degenerate) out.exit_code = kDegenerate;
  return out;
}

struct Check {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string note;

  void record(double err, double tol) {
    max_error = std::max(max_error, err);
    tolerance = tol;
    passed = passed && err <= tol;
    ++instances;
  }
  json to_json() const {
    json j{{"name", name}, {"instances", instances}, {"max_error", max_error}, {"tolerance", tolerance}, {"passed", passed}};
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

inline RunResult run_verify_identities(const RunConfig& c) {
  const std::uint64_t seed = c.seed_or_zero();
  const std::size_t count = std::max<std::size_t>(1, c.identities.instances);
  std::vector<Check> checks;

  {
    Check ch{.name = "gaussian_identity_closed_form"};
    Rng rng(stream_seed(seed, 1));
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_real_distribution<double> ux(0.05, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
      const Eigen::Index n = dim(rng);
      const SymMatrix a = instances::spd(n, rng, 0.5, 2.0);
      const SymMatrix cc = instances::spd(n, rng, 0.0, 0.4);
      const Vector y = 0.5 * instances::gaussian_matrix(n, 1, rng);
      const auto sides = gaussian_quadratic_identity(a, cc, ux(rng), y);
      ch.record(std::abs(sides.lhs - sides.rhs), 1e-12);
    }
    checks.push_back(ch);
  }
  {
    Check ch{.name = "gaussian_identity_monte_carlo", .note = "error in units of the standard error"};
    Rng rng(stream_seed(seed, 2));
    std::uniform_int_distribution<int> dim(1, 4);
    std::uniform_real_distribution<double> ux(0.05, 1.0);
    const std::size_t mc_count = std::min<std::size_t>(count, 3);
    for (std::size_t i = 0; i < mc_count; ++i) {
      const Eigen::Index n = dim(rng);
      const SymMatrix a = instances::spd(n, rng, 0.5, 2.0);
      const SymMatrix cc = instances::spd(n, rng, 0.0, 0.2);
      const Vector y = 0.5 * instances::gaussian_matrix(n, 1, rng);
      const double x = ux(rng);
      const auto sides = gaussian_quadratic_identity(a, cc, x, y);
      const auto mc = gaussian_identity_mc(a, cc, x, y, c.identities.mc_samples, stream_seed(seed, 2, i), c.workers);
      ch.record(std::abs(mc.estimate - sides.rhs) / mc.std_error, 3.0);
    }
    checks.push_back(ch);
  }
  {
    Check ch{.name = "jacobi_limit"};
    Rng rng(stream_seed(seed, 3));
    std::uniform_int_distribution<int> dim(1, 4);
    for (std::size_t i = 0; i < count; ++i) {
      const Eigen::Index n = dim(rng);
      const SymMatrix l1 = instances::spd(n, rng, 0.5, 2.0);
      const SymMatrix d1 = instances::spd(n, rng, 0.0, 1.0);
      ch.record(std::abs(log_ratio_term(l1, d1, 1e-6) - jacobi_limit_term(l1, d1)), 1e-4);
    }
    checks.push_back(ch);
  }

  Check grad{.name = "gradient_finite_difference", .note = "||fd - g|| / max(1, ||g||), central step 1e-5"};
  Check convex{.name = "midpoint_convexity"};
  Check refine{.name = "refinement_invariance"};
  Check theta{.name = "theta_cascade_agreement"};
  {
    Rng rng(stream_seed(seed, 4));
    std::uniform_int_distribution<int> dim(1, 3);
    std::uniform_int_distribution<int> levels(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
      const Eigen::Index n = dim(rng);
      const auto q = instances::constraint(n, rng);
      const auto path = instances::path(q, levels(rng), rng);
      const auto spec = instances::mixture(static_cast<std::size_t>(n), rng);
      const auto h = instances::field(static_cast<std::size_t>(n), rng);
      const ParisiObjective obj(path, q, h, spec);
      const Multiplier lam = instances::admissible_lambda(obj, rng);

      const SymBasis basis(n);
      const Vector g = basis.dual(obj.gradient(lam.matrix()));
      Vector fd(g.size());
      const double step = 1e-5;
      for (std::size_t a = 0; a < basis.size(); ++a) {
        const SymMatrix e = basis.element(a, n);
        fd(static_cast<Eigen::Index>(a)) =
            (*obj.value(lam.matrix() + step * e) - *obj.value(lam.matrix() - step * e)) / (2.0 * step);
      }
      grad.record((fd - g).norm() / std::max(1.0, g.norm()), 1e-6);

      const Multiplier other = instances::admissible_lambda(obj, rng);
      const SymMatrix mid = 0.5 * (lam.matrix() + other.matrix());
      const double gap = *obj.value(mid) - 0.5 * (*obj.value(lam.matrix()) + *obj.value(other.matrix()));
      convex.record(std::max(0.0, gap), 1e-10);

      const int k = std::uniform_int_distribution<int>(0, path.levels())(rng);
      const double lo = path.x(k - 1), hi = path.x(k);
      const double x_new = lo + (hi - lo) * (0.1 + 0.8 * unit(rng));
      const auto refined = refine_path(path, k, x_new);
      const double v0 = evaluate(lam, path, q, h, spec).total;
      const double v1 = evaluate(lam, refined, q, h, spec).total;
      refine.record(std::abs(v0 - v1), 1e-12);

      theta.record(theta_cascade_value(path, spec) == theta_term(path, spec) ? 0.0 : 1.0, 0.0);
    }
  }
  checks.push_back(grad);
  checks.push_back(convex);
  checks.push_back(refine);
  checks.push_back(theta);

  RunResult out;
  json list = json::array();
  bool all = true;
  for (const auto& ch : checks) {
    list.push_back(ch.to_json());
    all = all && ch.passed;
  }
  out.body = {{"checks", list}, {"all_passed", all}};
  out.exit_code = all ? kOk : kError;
  return out;
}

inline std::vector<std::size_t> level_samples(const CascadeParams& p, int r) {
  std::vector<std::size_t> s;
  for (int k = 0; k < r; ++k) s.push_back(p.samples[std::min<std::size_t>(static_cast<std::size_t>(k), p.samples.size() - 1)]);
  return s;
}

inline RunResult run_cascade_check(const RunConfig& c) {
  RunResult out;
  const DiscretePath path = default_path(c);
  if (!c.lambda && c.q.is_degenerate()) fail(ErrorCode::InvalidArgument, "cascade-check needs a multiplier when Q is degenerate");
  const Multiplier lambda = c.lambda ? *c.lambda : Multiplier(inner_minimize(path, c.q, c.h, c.mixture, c.search.inner).lambda_star);
  const std::uint64_t seed = c.seed_or_zero();
  const CascadeSpec cs(path, c.mixture, lambda, c.h);

  const double target = closed_form_Y0(lambda, path, c.h, c.mixture);
  const auto nested = nested_recursion_mc(cs, level_samples(c.cascade, path.levels()), stream_seed(seed, 1), c.workers);
  const double z = nested.std_error > 0.0 ? std::abs(nested.estimate - target) / nested.std_error
                                          : (nested.estimate == target ? 0.0 : std::abs(nested.estimate - target) / 1e-12);
  const bool nested_ok = nested.std_error > 0.0 ? z <= 3.0 : std::abs(nested.estimate - target) <= 1e-12;

  const double theta_functional = theta_term(path, c.mixture);
  const double theta_cascade = theta_cascade_value(path, c.mixture);
  const bool theta_ok = theta_functional == theta_cascade;

  out.body["path"] = path_json(path);
  out.body["lambda"] = matrix_json(lambda.matrix());
  out.body["recursion"] = {{"closed_form", target}, {"monte_carlo", nested_json(nested)}, {"z_score", z}, {"passed", nested_ok}};
  out.body["theta"] = {{"functional", theta_functional}, {"cascade", theta_cascade}, {"passed", theta_ok}};
  bool ok = nested_ok && theta_ok;

  if (c.cascade.finite_cascade) {
    const auto fin = cascade_free_energy_mc(cs, c.cascade.atoms, c.cascade.m_effective, c.cascade.reps, stream_seed(seed, 2), c.workers);
    const double rel = theta_cascade != 0.0 ? std::abs(fin.estimate - theta_cascade) / std::abs(theta_cascade)
                                            : std::abs(fin.estimate);
    const bool fin_ok = theta_cascade != 0.0 ? rel <= 0.1 : rel <= 3.0 * fin.std_error + 1e-12;
    out.body["finite_cascade"] = {{"estimate", fin.estimate},
                                  {"stderr", fin.std_error},
                                  {"atoms", c.cascade.atoms},
                                  {"m_effective", c.cascade.m_effective},
                                  {"reps", c.cascade.reps},
                                  {"target", theta_cascade},
                                  {"relative_error", rel},
                                  {"passed", fin_ok}};
    ok = ok && fin_ok;
  }
  out.body["all_passed"] = ok;
  out.exit_code = ok ? kOk : kError;
  return out;
}

inline RunResult run_mc_estimate(const RunConfig& c) {
  RunResult out;
  const auto& m = c.mc;
  const std::uint64_t seed = c.seed_or_zero();
  if (m.audit) {
    const auto a = doubling_audit(c.q, m.n_spins, m.eps, c.mixture, c.h, m.disorder_reps, m.config_samples, seed, c.workers);
    out.body["estimate"] = estimator_json(a.base);
    out.body["audit"] = {{"doubled", estimator_json(a.doubled)},
                         {"difference", a.difference},
                         {"allowance", a.allowance},
                         {"stable", a.stable}};
  } else {
    out.body["estimate"] =
        estimator_json(estimate_free_energy(c.q, m.n_spins, m.eps, c.mixture, c.h, m.disorder_reps, m.config_samples, seed, c.workers));
  }
  if (c.mixture.is_zero() && c.h.h.cwiseAbs().maxCoeff() == 0.0) out.body["analytic_reference"] = overlap_log_volume(c.q);
  return out;
}

inline RunResult run_sweep(const RunConfig& c) {
  if (c.sweep.values.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one value");
  RunResult out;
  json rows = json::array();
  std::ostringstream csv;
  csv << "parameter,value,best_value,best_level,degenerate\n";
  for (double v : c.sweep.values) {
    MixtureSpec spec = c.mixture;
    SymMatrix qm = c.q.matrix();
    if (c.sweep.parameter == "beta") {
      spec = c.mixture.scaled(v);
    } else {
      qm(0, 1) = v;
      qm(1, 0) = v;
    }
    const ConstraintMatrix q(qm);
    const auto r = minimize_over_paths(q, c.h, spec, search_config(c));
    rows.push_back({{"parameter", c.sweep.parameter},
                    {"value", v},
                    {"best_value", r.best_value},
                    {"best_level", r.best_level},
                    {"degenerate", r.degenerate}});
    csv << c.sweep.parameter << "," << format_csv_double(v) << "," << format_csv_double(r.best_value) << "," << r.best_level << ","
        << (r.degenerate ? 1 : 0) << "\n";
  }
  out.body["rows"] = rows;
  out.csv = csv.str();
  return out;
}

}  // namespace detail

/// Runs the configured task. Errors propagate as spinglass::Error.
inline RunResult run(const RunConfig& c) {
  if (c.task.empty()) fail(ErrorCode::ConfigSemantic, "task: no task given");
  if (is_stochastic(c.task) && !c.seed) fail(ErrorCode::ConfigSemantic, "seed: required for task " + c.task);
  if (c.format == "csv" && c.task != "sweep" && c.task != "minimize")
    fail(ErrorCode::InvalidArgument, "csv output is only available for sweep and minimize");
  RunResult r;
  if (c.task == "evaluate") r = detail::run_evaluate(c);
  else if (c.task == "minimize") r = detail::run_minimize(c);
  else if (c.task == "verify-identities") r = detail::run_verify_identities(c);
  else if (c.task == "cascade-check") r = detail::run_cascade_check(c);
  else if (c.task == "mc-estimate") r = detail::run_mc_estimate(c);
  else if (c.task == "sweep") r = detail::run_sweep(c);
  else fail(ErrorCode::ConfigSemantic, "task: unknown task '" + c.task + "'");
  r.body["task"] = c.task;
  if (c.seed) r.body["seed"] = *c.seed;
  r.body["config"] = to_json(c);
  r.body["config"].erase("workers");
  r.body["config"].erase("output");
  r.body["exit_code"] = r.exit_code;
  return r;
}

/// Full report: timestamp and worker count live in the header so the body
/// is reproducible byte for byte.
inline std::string render(const RunConfig& c, const RunResult& r) {
  if (c.format == "csv") return r.csv;
  json doc{{"header", {{"program", "spinglass"}, {"version", kVersion}, {"timestamp", utc_timestamp()}, {"workers", c.workers}}},
           {"body", r.body}};
  return dump(doc);
}

inline std::string render_error(const Error& e) {
  json doc{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}};
  return dump(doc);
}

/// Writes `text` to the configured output, or standard output.
inline void emit(const RunConfig& c, const std::string& text) {
  if (c.output.empty() || c.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(c.output);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot open output file '" + c.output + "'");
  out << text;
}

}  // namespace spinglass::app
