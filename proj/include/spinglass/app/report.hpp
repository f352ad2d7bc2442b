#pragma once

#include <cmath>
#include <cstdio>
#include <ctime>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "spinglass/app/config.hpp"
#include "spinglass/cascade.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/montecarlo.hpp"
#include "spinglass/optimizer.hpp"

namespace spinglass::app {

inline constexpr const char* kVersion = "0.1.0";

/// %.17g for every double; non-finite values become null.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV flavour: infinities are spelled out.
inline std::string format_csv_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

inline void write_json(std::ostream& os, const json& j, int indent = 2, int depth = 0) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(key).dump() << ": ";
        write_json(os, value, indent, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // numeric rows stay on one line
      bool flat = true;
      for (const auto& v : j) flat = flat && v.is_primitive();
      if (flat) {
        os << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(os, j[i], indent, depth + 1);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], indent, depth + 1);
      }
      os << "\n" << close << "]";
      return;
    }
    case json::value_t::number_float:
      os << format_double(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

inline std::string dump(const json& j) {
  std::ostringstream os;
  write_json(os, j);
  os << "\n";
  return os.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json breakdown_json(const FunctionalBreakdown& b) {
  return {{"total", b.total},
          {"trace_term", b.trace_term},
          {"const_term", b.const_term},
          {"logdet_term", b.logdet_term},
          {"field_term", b.field_term},
          {"cascade_term", b.cascade_term},
          {"theta_term", b.theta_term}};
}

inline json inner_json(const InnerSolveReport& r) {
  return {{"lambda", matrix_json(r.lambda_star)},
          {"value", r.value},
          {"gradient_norm", r.gradient_norm},
          {"iterations", r.iterations},
          {"status", to_string(r.status)},
          {"breakdown", breakdown_json(r.breakdown)}};
}

inline json certificate_json(const DegeneracyCertificate& c) {
  json ms = json::array();
  for (const auto& m : c.multipliers) ms.push_back(matrix_json(m));
  return {{"d11", c.d11}, {"values", c.values}, {"strictly_decreasing", c.strictly_decreasing()}, {"multipliers", ms}};
}

inline json optimization_json(const OptimizationReport& r) {
  json levels = json::array();
  for (const auto& l : r.per_level) {
    json e{{"r", l.r}, {"value", l.value}};
    if (l.path) e["path"] = path_json(*l.path);
    levels.push_back(std::move(e));
  }
  json out{{"degenerate", r.degenerate}, {"best_value", r.best_value}, {"best_level", r.best_level}, {"per_level", levels}};
  if (r.best_path) out["best_path"] = path_json(*r.best_path);
  if (r.inner) out["inner"] = inner_json(*r.inner);
  if (r.degenerate) out["certificate"] = certificate_json(r.certificate);
  return out;
}

inline json estimator_json(const EstimatorResult& e) {
  return {{"value", e.value},
          {"stderr", e.std_error},
          {"log_volume", e.log_volume},
          {"N", e.n_spins},
          {"n", e.copies},
          {"eps", e.eps},
          {"disorder_reps", e.disorder_reps},
          {"config_samples", e.config_samples},
          {"seed", e.seed}};
}

inline json nested_json(const NestedMCResult& r) {
  return {{"estimate", r.estimate}, {"stderr", r.std_error}, {"samples_per_level", r.samples_per_level}, {"seed", r.seed}};
}

}  // namespace spinglass::app
