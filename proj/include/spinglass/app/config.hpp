#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinglass/error.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/optimizer.hpp"

namespace spinglass::app {

using nlohmann::json;

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"evaluate", "minimize", "verify-identities", "cascade-check", "mc-estimate", "sweep"};
  return names;
}

inline bool is_stochastic(const std::string& task) {
  return task == "minimize" || task == "verify-identities" || task == "cascade-check" || task == "mc-estimate" ||
         task == "sweep";
}

struct CascadeParams {
  std::vector<std::size_t> samples{2000};  // per level; last entry repeats
  bool finite_cascade = false;
  std::size_t atoms = 10000;
  double m_effective = 32.0;
  std::size_t reps = 100;
  friend bool operator==(const CascadeParams&, const CascadeParams&) = default;
};

struct McParams {
  std::size_t n_spins = 32;
  double eps = 0.01;
  std::size_t disorder_reps = 50;
  std::size_t config_samples = 1000;
  bool audit = false;
  friend bool operator==(const McParams&, const McParams&) = default;
};

struct SweepParams {
  std::string parameter = "beta";  // "beta" scales every beta; "q12" sets Q(0,1)
  std::vector<double> values;
  friend bool operator==(const SweepParams&, const SweepParams&) = default;
};

struct IdentityParams {
  std::size_t instances = 20;
  std::size_t mc_samples = 100000;
  friend bool operator==(const IdentityParams&, const IdentityParams&) = default;
};

struct RunConfig {
  std::string task;
  MixtureSpec mixture;
  ConstraintMatrix q;
  ExternalField h;
  std::optional<DiscretePath> path;
  std::optional<Multiplier> lambda;
  PathSearchConfig search;
  CascadeParams cascade;
  McParams mc;
  SweepParams sweep;
  IdentityParams identities;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string output;  // empty: standard output
  std::string format = "json";

  std::size_t n() const { return q.dim(); }
  std::uint64_t seed_or_zero() const { return seed.value_or(0); }
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

[[noreturn]] inline void semantic(const std::string& field, const std::string& what) {
  fail(ErrorCode::ConfigSemantic, field + ": " + what);
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) semantic(where.empty() ? key : where + "." + key, "missing required field");
  return obj.at(key);
}

inline double number(const json& v, const std::string& field) {
  if (!v.is_number()) semantic(field, "expected a number");
  return v.get<double>();
}

inline std::size_t count(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 0) semantic(field, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

inline Vector vector(const json& v, const std::string& field, std::size_t n) {
  if (!v.is_array()) semantic(field, "expected an array");
  if (v.size() != n) semantic(field, "expected length " + std::to_string(n) + ", got " + std::to_string(v.size()));
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], field + "[" + std::to_string(i) + "]");
  return out;
}

inline SymMatrix matrix(const json& v, const std::string& field, std::size_t n) {
  if (!v.is_array() || v.size() != n) semantic(field, "expected " + std::to_string(n) + " rows");
  SymMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = vector(v[i], field + "[" + std::to_string(i) + "]", n);
  return out;
}

template <class F>
auto checked(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigSemantic) throw;
    semantic(field, e.what());
  }
}

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  // nlohmann reports the byte after the offending character
  if (col > 1) --col;
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) semantic(where.empty() ? key : where + "." + key, "unknown field");
  }
}

}  // namespace detail

inline RunConfig load_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigParse, "parse error at " + detail::line_column(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) detail::semantic("(root)", "expected a JSON object");
  detail::reject_unknown(doc,
                         {"task", "n", "mixture", "Q", "h", "path", "lambda", "search", "cascade", "mc", "sweep",
                          "identities", "seed", "workers", "output", "format"},
                         "");

  const std::size_t n = detail::count(detail::require(doc, "n", ""), "n");
  if (n == 0) detail::semantic("n", "must be at least 1");

  std::map<int, Vector> terms;
  if (doc.contains("mixture")) {
    const json& m = doc["mixture"];
    if (!m.is_object()) detail::semantic("mixture", "expected an object keyed by degree");
    for (const auto& [key, value] : m.items()) {
      const std::string field = "mixture." + key;
      int p = 0;
      try {
        std::size_t used = 0;
        p = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        detail::semantic(field, "degree must be an integer");
      }
      terms.emplace(p, value.is_number() ? Vector::Constant(static_cast<Eigen::Index>(n), value.get<double>())
                                         : detail::vector(value, field, n));
    }
  }
  MixtureSpec mixture = detail::checked("mixture", [&] { return MixtureSpec(n, terms); });
  ConstraintMatrix q = detail::checked("Q", [&] { return ConstraintMatrix(detail::matrix(detail::require(doc, "Q", ""), "Q", n)); });
  ExternalField h = doc.contains("h") ? detail::checked("h", [&] { return ExternalField(detail::vector(doc["h"], "h", n)); })
                                      : ExternalField::zero(n);

  RunConfig c{.task = {}, .mixture = std::move(mixture), .q = std::move(q), .h = std::move(h)};

  if (doc.contains("task")) {
    if (!doc["task"].is_string()) detail::semantic("task", "expected a string");
    c.task = doc["task"].get<std::string>();
    if (std::find(task_names().begin(), task_names().end(), c.task) == task_names().end())
      detail::semantic("task", "unknown task '" + c.task + "'");
  }

  if (doc.contains("path")) {
    const json& p = doc["path"];
    if (!p.is_object()) detail::semantic("path", "expected an object with xs and Qs");
    detail::reject_unknown(p, {"xs", "Qs"}, "path");
    const json& xs = detail::require(p, "xs", "path");
    const json& qs = detail::require(p, "Qs", "path");
    if (!xs.is_array() || !qs.is_array()) detail::semantic("path", "xs and Qs must be arrays");
    std::vector<double> b;
    for (std::size_t i = 0; i < xs.size(); ++i) b.push_back(detail::number(xs[i], "path.xs[" + std::to_string(i) + "]"));
    std::vector<SymMatrix> levels;
    for (std::size_t k = 0; k < qs.size(); ++k) levels.push_back(detail::matrix(qs[k], "path.Qs[" + std::to_string(k) + "]", n));
    DiscretePath path = detail::checked("path", [&] { return DiscretePath(b, levels); });
    const auto report = validate_path(path, c.q);
    if (!report.ok()) detail::semantic("path", report.summary());
    c.path = std::move(path);
  }
  if (doc.contains("lambda"))
    c.lambda = detail::checked("lambda", [&] { return Multiplier(detail::matrix(doc["lambda"], "lambda", n)); });

  if (doc.contains("search")) {
    const json& s = doc["search"];
    detail::reject_unknown(s,
                           {"max_levels", "x_grid_resolution", "q_parameterization", "restarts", "tolerance_value",
                            "max_iterations", "x_margin", "inner_max_iterations", "inner_gradient_tolerance"},
                           "search");
    auto& o = c.search;
    if (s.contains("max_levels")) o.max_levels = static_cast<int>(detail::count(s["max_levels"], "search.max_levels"));
    if (s.contains("x_grid_resolution")) o.x_grid_resolution = detail::number(s["x_grid_resolution"], "search.x_grid_resolution");
    if (s.contains("q_parameterization")) {
      const auto v = s["q_parameterization"].is_string() ? s["q_parameterization"].get<std::string>() : "";
      if (v == "cholesky_increments") o.q_parameterization = QParameterization::CholeskyIncrements;
      else if (v == "scalar_profile") o.q_parameterization = QParameterization::ScalarProfile;
      else detail::semantic("search.q_parameterization", "expected cholesky_increments or scalar_profile");
    }
    if (s.contains("restarts")) o.restarts = static_cast<int>(detail::count(s["restarts"], "search.restarts"));
    if (s.contains("tolerance_value")) o.tolerance_value = detail::number(s["tolerance_value"], "search.tolerance_value");
    if (s.contains("max_iterations")) o.max_iterations = static_cast<int>(detail::count(s["max_iterations"], "search.max_iterations"));
    if (s.contains("x_margin")) o.x_margin = detail::number(s["x_margin"], "search.x_margin");
    if (s.contains("inner_max_iterations"))
      o.inner.max_iterations = static_cast<int>(detail::count(s["inner_max_iterations"], "search.inner_max_iterations"));
    if (s.contains("inner_gradient_tolerance"))
      o.inner.gradient_tolerance = detail::number(s["inner_gradient_tolerance"], "search.inner_gradient_tolerance");
    detail::checked("search", [&] { o.validate(); return 0; });
  }

  if (doc.contains("cascade")) {
    const json& s = doc["cascade"];
    detail::reject_unknown(s, {"samples", "finite_cascade", "atoms", "m_effective", "reps"}, "cascade");
    auto& o = c.cascade;
    if (s.contains("samples")) {
      if (!s["samples"].is_array() || s["samples"].empty()) detail::semantic("cascade.samples", "expected a nonempty array");
      o.samples.clear();
      for (std::size_t i = 0; i < s["samples"].size(); ++i) {
        o.samples.push_back(detail::count(s["samples"][i], "cascade.samples[" + std::to_string(i) + "]"));
        if (o.samples.back() == 0) detail::semantic("cascade.samples[" + std::to_string(i) + "]", "must be positive");
      }
    }
    if (s.contains("finite_cascade")) {
      if (!s["finite_cascade"].is_boolean()) detail::semantic("cascade.finite_cascade", "expected a boolean");
      o.finite_cascade = s["finite_cascade"].get<bool>();
    }
    if (s.contains("atoms")) o.atoms = detail::count(s["atoms"], "cascade.atoms");
    if (s.contains("m_effective")) o.m_effective = detail::number(s["m_effective"], "cascade.m_effective");
    if (s.contains("reps")) o.reps = detail::count(s["reps"], "cascade.reps");
  }

  if (doc.contains("mc")) {
    const json& s = doc["mc"];
    detail::reject_unknown(s, {"N", "eps", "disorder_reps", "config_samples", "audit"}, "mc");
    auto& o = c.mc;
    if (s.contains("N")) o.n_spins = detail::count(s["N"], "mc.N");
    if (s.contains("eps")) o.eps = detail::number(s["eps"], "mc.eps");
    if (!(o.eps > 0.0)) detail::semantic("mc.eps", "must be positive");
    if (s.contains("disorder_reps")) o.disorder_reps = detail::count(s["disorder_reps"], "mc.disorder_reps");
    if (s.contains("config_samples")) o.config_samples = detail::count(s["config_samples"], "mc.config_samples");
    if (s.contains("audit")) {
      if (!s["audit"].is_boolean()) detail::semantic("mc.audit", "expected a boolean");
      o.audit = s["audit"].get<bool>();
    }
  }

  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    detail::reject_unknown(s, {"parameter", "values"}, "sweep");
    auto& o = c.sweep;
    if (s.contains("parameter")) {
      o.parameter = s["parameter"].is_string() ? s["parameter"].get<std::string>() : "";
      if (o.parameter != "beta" && o.parameter != "q12") detail::semantic("sweep.parameter", "expected beta or q12");
      if (o.parameter == "q12" && n < 2) detail::semantic("sweep.parameter", "q12 needs n >= 2");
    }
    const json& v = detail::require(s, "values", "sweep");
    if (!v.is_array()) detail::semantic("sweep.values", "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) o.values.push_back(detail::number(v[i], "sweep.values[" + std::to_string(i) + "]"));
  }

  if (doc.contains("identities")) {
    const json& s = doc["identities"];
    detail::reject_unknown(s, {"instances", "mc_samples"}, "identities");
    if (s.contains("instances")) c.identities.instances = detail::count(s["instances"], "identities.instances");
    if (s.contains("mc_samples")) c.identities.mc_samples = detail::count(s["mc_samples"], "identities.mc_samples");
  }

  if (doc.contains("seed")) {
    const json& s = doc["seed"];
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
      detail::semantic("seed", "expected an unsigned 64-bit integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("workers")) {
    c.workers = static_cast<unsigned>(detail::count(doc["workers"], "workers"));
    if (c.workers == 0) detail::semantic("workers", "must be at least 1");
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) detail::semantic("output", "expected a string");
    c.output = doc["output"].get<std::string>();
  }
  if (doc.contains("format")) {
    c.format = doc["format"].is_string() ? doc["format"].get<std::string>() : "";
    if (c.format != "json" && c.format != "csv") detail::semantic("format", "expected json or csv");
  }
  return c;
}

inline RunConfig load_config_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::ConfigParse, "cannot open config file '" + file + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return load_config(os.str());
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Breakpoints include x_{-1} = 0, so xs has r + 2 entries and Qs has r + 1.
inline json path_json(const DiscretePath& p) {
  json xs = json::array();
  for (double x : p.breakpoints()) xs.push_back(x);
  json qs = json::array();
  for (const auto& m : p.overlaps()) qs.push_back(matrix_json(m));
  return {{"xs", xs}, {"Qs", qs}};
}

inline json to_json(const RunConfig& c) {
  json mixture = json::object();
  for (const auto& [p, beta] : c.mixture.terms()) mixture[std::to_string(p)] = vector_json(beta);
  json out{{"n", c.n()}, {"mixture", mixture}, {"Q", matrix_json(c.q.matrix())}, {"h", vector_json(c.h.h)}};
  if (!c.task.empty()) out["task"] = c.task;
  if (c.path) out["path"] = path_json(*c.path);
  if (c.lambda) out["lambda"] = matrix_json(c.lambda->matrix());
  const auto& s = c.search;
  out["search"] = {{"max_levels", s.max_levels},
                   {"x_grid_resolution", s.x_grid_resolution},
                   {"q_parameterization", to_string(s.q_parameterization)},
                   {"restarts", s.restarts},
                   {"tolerance_value", s.tolerance_value},
                   {"max_iterations", s.max_iterations},
                   {"x_margin", s.x_margin},
                   {"inner_max_iterations", s.inner.max_iterations},
                   {"inner_gradient_tolerance", s.inner.gradient_tolerance}};
  out["cascade"] = {{"samples", c.cascade.samples},
                    {"finite_cascade", c.cascade.finite_cascade},
                    {"atoms", c.cascade.atoms},
                    {"m_effective", c.cascade.m_effective},
                    {"reps", c.cascade.reps}};
  out["mc"] = {{"N", c.mc.n_spins},
               {"eps", c.mc.eps},
               {"disorder_reps", c.mc.disorder_reps},
               {"config_samples", c.mc.config_samples},
               {"audit", c.mc.audit}};
  out["sweep"] = {{"parameter", c.sweep.parameter}, {"values", c.sweep.values}};
  out["identities"] = {{"instances", c.identities.instances}, {"mc_samples", c.identities.mc_samples}};
  if (c.seed) out["seed"] = *c.seed;
  out["workers"] = c.workers;
  if (!c.output.empty()) out["output"] = c.output;
  out["format"] = c.format;
  return out;
}

}  // namespace spinglass::app
