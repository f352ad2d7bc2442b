#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spinglass/error.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

enum class InnerStatus { Converged, Diverging, BoundaryStall, MaxIterations };

inline const char* to_string(InnerStatus s) {
  switch (s) {
    case InnerStatus::Converged: return "converged";
    case InnerStatus::Diverging: return "diverging";
    case InnerStatus::BoundaryStall: return "boundary_stall";
    case InnerStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct InnerOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;  // relative to max(1, |value|)

  friend bool operator==(const InnerOptions&, const InnerOptions&) = default;
};

struct InnerSolveReport {
  SymMatrix lambda_star;
  double value = std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  InnerStatus status = InnerStatus::MaxIterations;
  FunctionalBreakdown breakdown;
};

inline SymMatrix inner_gradient(const Multiplier& lambda, const DiscretePath& path, const ConstraintMatrix& q,
                                const ExternalField& h, const MixtureSpec& spec) {
  return ParisiObjective(path, q, h, spec).gradient(lambda.matrix());
}

/// Admissible starting point Q^{-1} + sum_k x_k Delta_{k+1}, whose Lambda_0 is Q^{-1}.
inline SymMatrix default_start(const ParisiObjective& objective) {
  const auto& q = objective.constraint().matrix();
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) fail(ErrorCode::InvalidArgument, "constraint must be positive definite for the inner solve");
  const auto n = q.rows();
  SymMatrix start = linalg::symmetrize(llt.solve(SymMatrix::Identity(n, n))) + objective.offset();
  return linalg::mirrored(start);
}

/// Damped Newton on Lambda -> functional, with backtracking that rejects any
/// trial point whose Lambda_0 leaves the admissible set. Falls back to a
/// gradient step when the Hessian is not numerically positive definite.
inline InnerSolveReport inner_minimize(const ParisiObjective& objective, const InnerOptions& options = {},
                                       std::optional<SymMatrix> start = std::nullopt) {
  const auto n = static_cast<Eigen::Index>(objective.dim());
  const SymBasis basis(n);
  SymMatrix lambda = start ? linalg::mirrored(*start) : default_start(objective);
  auto current = objective.try_evaluate(lambda);
  if (!current) fail(ErrorCode::NotInL, "inner solve started outside the admissible set");

  InnerSolveReport report;
  report.status = InnerStatus::MaxIterations;
  for (int it = 0;; ++it) {
    const double f = current->total;
    const SymMatrix g = objective.gradient(lambda);
    const double gnorm = g.norm();
    report.lambda_star = lambda;
    report.value = f;
    report.gradient_norm = gnorm;
    report.iterations = it;
    report.breakdown = *current;
    const double scale = std::max(1.0, std::abs(f));
    if (gnorm <= options.gradient_tolerance * scale) {
      report.status = InnerStatus::Converged;
      return report;
    }
    if (it >= options.max_iterations) return report;
    if (lambda.cwiseAbs().maxCoeff() > 1e12) {
      report.status = InnerStatus::Diverging;
      return report;
    }

    const Vector grad = basis.dual(g);
    Vector dir;
    bool newton = false;
    {
      const Matrix hess = objective.hessian(lambda, basis);
      Eigen::LLT<Matrix> llt(hess);
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(grad);
        newton = dir.allFinite() && dir.dot(grad) < 0.0;
      }
    }
    if (!newton) dir = -grad;
    const double slope = dir.dot(grad);
    const SymMatrix step = basis.matrix(dir, n);

    bool accepted = false;
    for (double t = 1.0; t > 1e-14; t *= 0.5) {
      SymMatrix trial = lambda + t * step;
      auto tb = objective.try_evaluate(trial);
      if (!tb) continue;
      const bool armijo = tb->total <= f + 1e-4 * t * slope;
      // Near the optimum the predicted decrease drops below rounding.
      const bool flat = newton && t == 1.0 && -slope < 1e-14 * scale && tb->total <= f + 1e-13 * scale;
      if (armijo || flat) {
        lambda = std::move(trial);
        current = tb;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.status = InnerStatus::BoundaryStall;
      return report;
    }
  }
}

inline InnerSolveReport inner_minimize(const DiscretePath& path, const ConstraintMatrix& q, const ExternalField& h,
                                       const MixtureSpec& spec, const InnerOptions& options = {}) {
  if (q.is_degenerate()) fail(ErrorCode::InvalidArgument, "degenerate constraint: use detect_degenerate");
  return inner_minimize(ParisiObjective(path, q, h, spec), options);
}

/// Divergence certificate for a degenerate constraint: multipliers along the
/// ray U D U^T with D_11 growing, and the functional's values there.
struct DegeneracyCertificate {
  bool degenerate = false;
  std::vector<double> d11;
  std::vector<SymMatrix> multipliers;
  std::vector<double> values;

  bool strictly_decreasing() const {
    for (std::size_t i = 1; i < values.size(); ++i)
      if (!(values[i] < values[i - 1])) return false;
    return !values.empty();
  }
};

/// Default path used when a degenerate constraint short-circuits the search.
inline DiscretePath single_level_path(const ConstraintMatrix& q, double x0 = 0.5) {
  const std::vector<double> xs{x0};
  return scalar_profile_path(xs, {}, q);
}

/// If Q is degenerate, builds the ray from the eigenbasis of Q: the first
/// diagonal entry of D multiplies the null eigenvalue, the others get a
/// Gershgorin margin so every Lambda_k stays positive definite. Values are
/// computed in the rotated frame with the null eigenvalue set to exactly 0.
inline DegeneracyCertificate detect_degenerate(const ConstraintMatrix& q, const DiscretePath& path, const ExternalField& h,
                                               const MixtureSpec& spec) {
  DegeneracyCertificate cert;
  if (!q.is_degenerate()) return cert;
  cert.degenerate = true;
  if (spec.dim() != q.dim() || h.dim() != q.dim()) fail(ErrorCode::DimensionMismatch, "dimensions differ");
  require_valid(path, q);

  const auto n = static_cast<Eigen::Index>(q.dim());
  const int r = path.levels();
  Eigen::SelfAdjointEigenSolver<Matrix> es(q.matrix());
  const Matrix u = es.eigenvectors();
  Vector lam = es.eigenvalues();
  lam(0) = 0.0;

  const auto deltas = delta_increments(spec, path);
  std::vector<SymMatrix> rotated;
  for (const auto& d : deltas) rotated.push_back(linalg::mirrored(linalg::symmetrize(u.transpose() * d * u)));
  // partial[k] = sum_{l >= k} x_l R_l, k = 0..r.
  std::vector<SymMatrix> partial(static_cast<std::size_t>(r + 1), SymMatrix::Zero(n, n));
  for (int k = r - 1; k >= 0; --k)
    partial[static_cast<std::size_t>(k)] = partial[static_cast<std::size_t>(k + 1)] + path.x(k) * rotated[static_cast<std::size_t>(k)];

  Vector base = Vector::Ones(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double worst = 0.0;
    for (const auto& m : partial) {
      double radius = m(j, j);
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) radius += std::abs(m(j, i));
      worst = std::max(worst, radius);
    }
    base(j) = 1.0 + worst;
  }
  const Vector uh = u.transpose() * h.h;
  const double theta = theta_term(path, spec);

  auto value_at = [&](double d11) {
    Vector diag = base;
    diag(0) = d11;
    const SymMatrix dmat = diag.asDiagonal();
    double trace = 0.0, logdet = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      trace += diag(j) * lam(j);
      logdet += std::log(diag(j));
    }
    double cascade = 0.0;
    for (int k = 0; k < r; ++k) {
      const SymMatrix ak = dmat - partial[static_cast<std::size_t>(k)];
      Eigen::LLT<Matrix> llt(ak);
      if (llt.info() != Eigen::Success) fail(ErrorCode::NotInL, "degeneracy ray left the admissible set");
      cascade += detail::log_ratio(llt, rotated[static_cast<std::size_t>(k)], path.x(k)) / path.x(k);
    }
    Eigen::LLT<Matrix> llt0(SymMatrix(dmat - partial[0]));
    const double field = uh.dot(llt0.solve(uh));
    return 0.5 * (trace - static_cast<double>(n) - logdet + field + cascade) - theta;
  };

  const double d1 = std::max(10.0, base(0));
  const double v1 = value_at(d1);
  const double d2 = 100.0 * d1;
  // value(D_11) <= v1 - 1/2 log(D_11 / d1), so this D_11 forces a value below -100.
  const double target = std::min(700.0, 2.0 * (v1 + 101.0));
  const double d3 = std::max(1e5 * d1, d1 * std::exp(std::max(0.0, target)));
  for (double d : {d1, d2, d3}) {
    Vector diag = base;
    diag(0) = d;
    cert.d11.push_back(d);
    cert.multipliers.push_back(linalg::mirrored(linalg::symmetrize(u * diag.asDiagonal() * u.transpose())));
    cert.values.push_back(d == d1 ? v1 : value_at(d));
  }
  return cert;
}

enum class QParameterization { CholeskyIncrements, ScalarProfile };

inline const char* to_string(QParameterization p) {
  return p == QParameterization::CholeskyIncrements ? "cholesky_increments" : "scalar_profile";
}

struct PathSearchConfig {
  int max_levels = 3;
  double x_grid_resolution = 0.1;
  QParameterization q_parameterization = QParameterization::CholeskyIncrements;
  int restarts = 2;
  double tolerance_value = 1e-9;
  int max_iterations = 200;  // compass sweeps per start
  double x_margin = 1e-6;    // x_0 >= margin, gaps >= margin, x_{r-1} <= 1 - margin
  std::uint64_t seed = 0;
  unsigned workers = 1;
  InnerOptions inner;

  friend bool operator==(const PathSearchConfig&, const PathSearchConfig&) = default;

  void validate() const {
    if (max_levels < 1) fail(ErrorCode::InvalidArgument, "max_levels must be >= 1");
    if (!(x_grid_resolution > 0.0 && x_grid_resolution < 1.0))
      fail(ErrorCode::InvalidArgument, "x_grid_resolution must lie in (0, 1)");
    if (restarts < 0) fail(ErrorCode::InvalidArgument, "restarts must be >= 0");
    if (!(tolerance_value > 0.0)) fail(ErrorCode::InvalidArgument, "tolerance_value must be positive");
    if (max_iterations < 1) fail(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    if (!(x_margin >= kMinGap && x_margin * (max_levels + 1) < 1.0))
      fail(ErrorCode::InvalidArgument, "x_margin out of range");
    if (inner.max_iterations < 1 || !(inner.gradient_tolerance > 0.0))
      fail(ErrorCode::InvalidArgument, "inner solver options out of range");
  }
};

struct LevelResult {
  int r = 0;
  double value = std::numeric_limits<double>::infinity();
  std::optional<DiscretePath> path;
};

struct OptimizationReport {
  bool degenerate = false;
  double best_value = std::numeric_limits<double>::infinity();  // -inf when degenerate
  int best_level = 0;
  std::optional<DiscretePath> best_path;
  std::optional<InnerSolveReport> inner;
  std::vector<LevelResult> per_level;
  DegeneracyCertificate certificate;
};

namespace detail {

/// Search coordinates for one level: x_0..x_{r-1}, then the chain parameters
/// (q_1..q_{r-1} for the scalar profile, or r square factors F_i with
/// increments F_i F_i^T for the Cholesky parameterisation).
class PathCoordinates {
 public:
  PathCoordinates(int r, std::size_t n, QParameterization kind) : r_(r), n_(static_cast<Eigen::Index>(n)), kind_(kind) {}

  int levels() const { return r_; }
  std::size_t x_count() const { return static_cast<std::size_t>(r_); }
  std::size_t size() const {
    return x_count() + (kind_ == QParameterization::ScalarProfile ? static_cast<std::size_t>(r_ - 1)
                                                                  : static_cast<std::size_t>(r_ * n_ * n_));
  }
  bool bounded(std::size_t i) const { return i < x_count() || kind_ == QParameterization::ScalarProfile; }

  /// Feasible interval of coordinate i given the others.
  std::pair<double, double> bounds(const std::vector<double>& p, std::size_t i, double margin) const {
    const auto r = static_cast<std::size_t>(r_);
    if (i < r) {
      const double lo = (i == 0 ? 0.0 : p[i - 1]) + margin;
      const double hi = (i + 1 == r ? 1.0 : p[i + 1]) - margin;
      return {lo, hi};
    }
    const std::size_t j = i - r;  // q_{j+1}
    const double lo = j == 0 ? 0.0 : p[i - 1];
    const double hi = j + 1 == r - 1 ? 1.0 : p[i + 1];
    return {lo, hi};
  }

  std::optional<DiscretePath> path(const std::vector<double>& p, const ConstraintMatrix& q) const {
    const auto r = static_cast<std::size_t>(r_);
    std::vector<double> xs(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(r));
    if (kind_ == QParameterization::ScalarProfile) {
      std::vector<double> qs(p.begin() + static_cast<std::ptrdiff_t>(r), p.end());
      return scalar_profile_path(xs, qs, q);
    }
    std::vector<SymMatrix> incr;
    SymMatrix total = SymMatrix::Zero(n_, n_);
    for (std::size_t i = 0; i < r; ++i) {
      Matrix f(n_, n_);
      for (Eigen::Index a = 0; a < n_; ++a)
        for (Eigen::Index b = 0; b < n_; ++b) f(a, b) = p[r + i * static_cast<std::size_t>(n_ * n_) + static_cast<std::size_t>(a * n_ + b)];
      incr.push_back(linalg::symmetrize(f * f.transpose()));
      total += incr.back();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(total);
    const Vector ev = es.eigenvalues();
    if (!(ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff()))) return std::nullopt;
    const Matrix inv_sqrt = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    const Matrix t = linalg::psd_sqrt(q.matrix()) * inv_sqrt;
    std::vector<double> b{0.0};
    b.insert(b.end(), xs.begin(), xs.end());
    b.push_back(1.0);
    std::vector<SymMatrix> levels{SymMatrix::Zero(n_, n_)};
    SymMatrix acc = SymMatrix::Zero(n_, n_);
    for (std::size_t i = 0; i + 1 < r; ++i) {
      acc += linalg::symmetrize(t * incr[i] * t.transpose());
      levels.push_back(linalg::mirrored(acc));
    }
    levels.push_back(q.matrix());
    return DiscretePath(std::move(b), std::move(levels));
  }

  /// Coordinates reproducing `path` (a valid level-r path to q).
  std::vector<double> from_path(const DiscretePath& path) const {
    std::vector<double> p;
    for (int k = 0; k < r_; ++k) p.push_back(path.x(k));
    if (kind_ == QParameterization::ScalarProfile) {
      for (int k = 1; k < r_; ++k) p.push_back(path.q(k)(0, 0));
      return p;
    }
    for (int k = 1; k <= r_; ++k) {
      const Matrix f = linalg::psd_factor(linalg::symmetrize(path.q(k) - path.q(k - 1)));
      for (Eigen::Index a = 0; a < n_; ++a)
        for (Eigen::Index b = 0; b < n_; ++b) p.push_back(f(a, b));
    }
    return p;
  }

 private:
  int r_;
  Eigen::Index n_;
  QParameterization kind_;
};

struct Candidate {
  double value = std::numeric_limits<double>::infinity();
  std::optional<DiscretePath> path;
};

}  // namespace detail

/// Infimum of the functional over Lambda for one path; +inf when the path is
/// rejected or the inner solve does not converge.
inline double path_value(const DiscretePath& path, const ConstraintMatrix& q, const ExternalField& h, const MixtureSpec& spec,
                         const InnerOptions& options, InnerSolveReport* out = nullptr) {
  try {
    const ParisiObjective objective(path, q, h, spec);
    auto rep = inner_minimize(objective, options);
    if (rep.status != InnerStatus::Converged) return std::numeric_limits<double>::infinity();
    const double v = rep.value;
    if (out) *out = std::move(rep);
    return v;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace detail {

/// Quasi-Newton finish on a smooth interior optimum: central differences,
/// BFGS inverse update, backtracking (infeasible trials come back as +inf).
template <class F>
double bfgs_polish(const F& f, std::vector<double>& p, double best, int max_iterations = 100) {
  const auto m = static_cast<Eigen::Index>(p.size());
  auto probe = [&](const std::vector<double>& at, Eigen::Index i, double h) {
    auto trial = at;
    trial[static_cast<std::size_t>(i)] += h;
    return f(trial);
  };
  auto step_of = [&](const std::vector<double>& at, Eigen::Index i) {
    return 1e-6 * std::max(1.0, std::abs(at[static_cast<std::size_t>(i)]));
  };
  // coordinates pinned at a bound stay where the compass search left them
  std::vector<bool> free(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = step_of(p, i);
    free[static_cast<std::size_t>(i)] = std::isfinite(probe(p, i, h)) && std::isfinite(probe(p, i, -h));
  }
  auto gradient = [&](const std::vector<double>& at, Vector& g) {
    g = Vector::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!free[static_cast<std::size_t>(i)]) continue;
      const double h = step_of(at, i);
      const double fu = probe(at, i, h), fd = probe(at, i, -h);
      if (!std::isfinite(fu) || !std::isfinite(fd)) return false;
      g(i) = (fu - fd) / (2.0 * h);
    }
    return true;
  };
  Vector g;
  if (!gradient(p, g) || g.isZero()) return best;
  Matrix hinv = Matrix::Identity(m, m);
  for (int it = 0; it < max_iterations; ++it) {
    Vector d = -hinv * g;
    if (!(d.dot(g) < 0.0)) {
      hinv.setIdentity();
      d = -g;
    }
    // keep trial steps local
    const double cap = 0.05 / std::max(0.05, d.cwiseAbs().maxCoeff());
    d *= std::min(1.0, cap);
    bool moved = false;
    std::vector<double> trial;
    double fv = best;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      trial = p;
      for (Eigen::Index i = 0; i < m; ++i) trial[static_cast<std::size_t>(i)] += t * d(i);
      fv = f(trial);
      if (fv < best + 1e-4 * t * d.dot(g)) {
        moved = true;
        d *= t;
        break;
      }
    }
    if (!moved) break;
    Vector g_new;
    if (!gradient(trial, g_new)) {
      if (fv < best) {
        p = std::move(trial);
        best = fv;
      }
      break;
    }
    const Vector y = g_new - g;
    const double sy = d.dot(y);
    if (sy > 1e-16) {
      const double rho = 1.0 / sy;
      const Matrix ident = Matrix::Identity(m, m);
      hinv = (ident - rho * d * y.transpose()) * hinv * (ident - rho * y * d.transpose()) + rho * d * d.transpose();
    }
    const double gain = best - fv;
    p = std::move(trial);
    best = fv;
    g = std::move(g_new);
    if (gain < 1e-15 * std::max(1.0, std::abs(best))) break;
  }
  return best;
}

/// Compass search over the path coordinates starting at p0. Bounded
/// coordinates get a grid scan first.
inline Candidate compass_search(const PathCoordinates& coords, std::vector<double> p, const ConstraintMatrix& q,
                                const ExternalField& h, const MixtureSpec& spec, const PathSearchConfig& cfg) {
  auto f = [&](const std::vector<double>& params) {
    const auto path = coords.path(params, q);
    if (!path) return std::numeric_limits<double>::infinity();
    return path_value(*path, q, h, spec, cfg.inner);
  };
  double best = f(p);
  const std::size_t m = coords.size();
  std::vector<double> step(m, cfg.x_grid_resolution);
  for (std::size_t i = coords.x_count(); i < m; ++i)
    if (!coords.bounded(i)) step[i] = 0.1 * std::max(0.5, std::abs(p[i]));

  for (std::size_t i = 0; i < m; ++i) {
    if (!coords.bounded(i)) continue;
    const auto [lo, hi] = coords.bounds(p, i, cfg.x_margin);
    if (!(hi > lo)) continue;
    const int count = static_cast<int>(std::ceil((hi - lo) / cfg.x_grid_resolution));
    for (int g = 0; g <= count; ++g) {
      auto trial = p;
      trial[i] = std::min(hi, lo + g * (hi - lo) / std::max(1, count));
      const double v = f(trial);
      if (v < best - cfg.tolerance_value) {
        best = v;
        p = std::move(trial);
      }
    }
  }

  for (int sweep = 0; sweep < cfg.max_iterations; ++sweep) {
    bool improved = false;
    for (std::size_t i = 0; i < m; ++i) {
      for (double dir : {1.0, -1.0}) {
        for (int expand = 0; expand < 8; ++expand) {
          auto trial = p;
          trial[i] += dir * step[i];
          if (coords.bounded(i)) {
            const auto [lo, hi] = coords.bounds(p, i, cfg.x_margin);
            trial[i] = std::clamp(trial[i], lo, std::max(lo, hi));
          }
          if (trial[i] == p[i]) break;
          const double v = f(trial);
          if (!(v < best)) break;
          best = v;
          p = std::move(trial);
          improved = true;
          step[i] *= 2.0;
        }
      }
    }
    if (!improved) {
      double largest = 0.0;
      for (auto& s : step) {
        s *= 0.25;
        largest = std::max(largest, s);
      }
      if (largest < 1e-10) break;
    }
  }
  best = bfgs_polish(f, p, best);
  Candidate out;
  out.value = best;
  out.path = coords.path(p, q);
  return out;
}

inline std::vector<double> random_start(const PathCoordinates& coords, const ConstraintMatrix& q, Rng& rng, double margin) {
  const int r = coords.levels();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> xs;
  for (int k = 0; k < r; ++k) xs.push_back(unif(rng));
  std::sort(xs.begin(), xs.end());
  for (int k = 0; k < r; ++k) {
    const double lo = (k == 0 ? 0.0 : xs[static_cast<std::size_t>(k - 1)]) + margin;
    xs[static_cast<std::size_t>(k)] = std::clamp(xs[static_cast<std::size_t>(k)], lo, 1.0 - margin * (r - k));
  }
  std::vector<double> qs;
  for (int k = 1; k < r; ++k) qs.push_back(unif(rng));
  std::sort(qs.begin(), qs.end());
  auto path = scalar_profile_path(xs, qs, q);
  auto p = coords.from_path(path);
  if (!coords.bounded(p.size() - 1)) {
    std::normal_distribution<double> gauss(0.0, 0.2);
    for (std::size_t i = coords.x_count(); i < p.size(); ++i) p[i] += gauss(rng);
  }
  return p;
}

}  // namespace detail

/// Heuristic search for inf over (Lambda, pi): exact inner convex solve per
/// path, compass search over paths for r = 1..max_levels. The result is an
/// upper bound on the infimum; per-level values are nonincreasing because
/// each level starts from the previous level's best path with one
/// breakpoint duplicated.
inline OptimizationReport minimize_over_paths(const ConstraintMatrix& q, const ExternalField& h, const MixtureSpec& spec,
                                              const PathSearchConfig& cfg) {
  cfg.validate();
  if (spec.dim() != q.dim() || h.dim() != q.dim()) fail(ErrorCode::DimensionMismatch, "dimensions differ");
  OptimizationReport report;
  if (q.is_degenerate()) {
    report.degenerate = true;
    report.best_value = -std::numeric_limits<double>::infinity();
    report.certificate = detect_degenerate(q, single_level_path(q), h, spec);
    return report;
  }

  std::optional<DiscretePath> previous;
  for (int r = 1; r <= cfg.max_levels; ++r) {
    LevelResult level;
    level.r = r;
    if (spec.is_zero()) {
      // Every increment vanishes, so the functional does not depend on the path.
      std::vector<double> xs, qs;
      for (int k = 0; k < r; ++k) xs.push_back(static_cast<double>(k + 1) / (r + 1));
      for (int k = 1; k < r; ++k) qs.push_back(static_cast<double>(k) / r);
      auto path = scalar_profile_path(xs, qs, q);
      level.value = path_value(path, q, h, spec, cfg.inner);
      level.path = std::move(path);
      report.per_level.push_back(std::move(level));
      continue;
    }

    const detail::PathCoordinates coords(r, q.dim(), cfg.q_parameterization);
    std::vector<std::vector<double>> starts;
    {
      std::vector<double> xs, qs;
      for (int k = 0; k < r; ++k) xs.push_back(static_cast<double>(k + 1) / (r + 1));
      for (int k = 1; k < r; ++k) qs.push_back(static_cast<double>(k) / r);
      starts.push_back(coords.from_path(scalar_profile_path(xs, qs, q)));
    }
    std::vector<detail::Candidate> embedded;
    if (previous) {
      for (int k = 0; k < r; ++k) {
        const double lo = previous->x(k - 1), hi = previous->x(k);
        if (hi - lo < 2.0 * cfg.x_margin) continue;
        auto refined = refine_path(*previous, k, 0.5 * (lo + hi));
        starts.push_back(coords.from_path(refined));
        if (k > 0) {
          // duplicated levels sit near a stationary point; also start from a genuinely new level
          std::vector<double> xs(refined.breakpoints().begin(), refined.breakpoints().end());
          std::vector<SymMatrix> qs = refined.overlaps();
          qs[static_cast<std::size_t>(k)] = linalg::symmetrize(0.5 * (previous->q(k - 1) + previous->q(k)));
          starts.push_back(coords.from_path(DiscretePath(std::move(xs), std::move(qs))));
        }
        detail::Candidate c;
        c.value = report.per_level.back().value;
        c.path = std::move(refined);
        embedded.push_back(std::move(c));
      }
    }
    for (int s = 0; s < cfg.restarts; ++s) {
      Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(s)));
      starts.push_back(detail::random_start(coords, q, rng, cfg.x_margin));
    }

    std::vector<detail::Candidate> results(starts.size());
    parallel_for(starts.size(), cfg.workers,
                 [&](std::size_t i) { results[i] = detail::compass_search(coords, starts[i], q, h, spec, cfg); });
    // Ordered reduction: embedded paths first, then starts in index order.
    detail::Candidate best;
    for (auto& c : embedded)
      if (c.value < best.value) best = c;
    for (auto& c : results)
      if (c.path && c.value < best.value) best = c;
    level.value = best.value;
    level.path = best.path;
    previous = best.path;
    report.per_level.push_back(std::move(level));
  }

  double best_value = std::numeric_limits<double>::infinity();
  for (const auto& l : report.per_level) best_value = std::min(best_value, l.value);
  for (const auto& l : report.per_level)
    if (l.value <= best_value + cfg.tolerance_value) {
      report.best_level = l.r;
      report.best_path = l.path;
      break;
    }
  report.best_value = best_value;
  if (report.best_path) {
    InnerSolveReport inner;
    path_value(*report.best_path, q, h, spec, cfg.inner, &inner);
    report.inner = std::move(inner);
  }
  return report;
}

}  // namespace spinglass
