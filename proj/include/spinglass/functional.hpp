#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "spinglass/error.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"

namespace spinglass {

/// Lambda is admissible when the smallest eigenvalue of Lambda_0 exceeds this.
inline constexpr double kAdmissibleMargin = 1e-12;

/// Symmetric positive definite Lagrange multiplier.
class Multiplier {
 public:
  explicit Multiplier(SymMatrix m) : m_(std::move(m)) {
    if (!linalg::is_square(m_) || m_.rows() == 0) fail(ErrorCode::DimensionMismatch, "multiplier must be square");
    if (!linalg::all_finite(m_)) fail(ErrorCode::InvalidArgument, "multiplier entries must be finite");
    if (!linalg::is_exactly_symmetric(m_)) fail(ErrorCode::InvalidArgument, "multiplier must be symmetric");
    if (!(linalg::min_eigenvalue(m_) > 0.0)) fail(ErrorCode::NotPsd, "multiplier must be positive definite");
  }
  const SymMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  friend bool operator==(const Multiplier& a, const Multiplier& b) { return a.m_ == b.m_; }

 private:
  SymMatrix m_;
};

/// Backward chain Lambda_r = Lambda, Lambda_k = Lambda_{k+1} - x_k Delta_{k+1}.
struct LambdaChain {
  std::vector<SymMatrix> lambdas;   // lambdas[k] = Lambda_k, k = 0..r
  std::vector<double> logdets;      // log|Lambda_k|; NaN where not positive definite
  std::vector<double> log_ratios;   // log(|Lambda_{k+1}| / |Lambda_k|), k = 0..r-1
  double det0 = 0.0;
  double min_eigenvalue0 = 0.0;

  int levels() const { return static_cast<int>(lambdas.size()) - 1; }
  bool admissible() const { return min_eigenvalue0 > kAdmissibleMargin; }
};

namespace detail {

/// log|I + x L^{-1} D L^{-T}| for the Cholesky factor L of a PD matrix.
inline double log_ratio(const Eigen::LLT<Matrix>& llt, const SymMatrix& delta, double x) {
  if (delta.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  const Matrix l = llt.matrixL();
  Matrix tmp = l.triangularView<Eigen::Lower>().solve(delta);
  Matrix m = l.triangularView<Eigen::Lower>().solve(tmp.transpose());
  m = linalg::symmetrize(m);
  const Vector mu = linalg::eigenvalues(m);
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) s += std::log1p(x * mu(i));
  return s;
}

}  // namespace detail

/// Chain from precomputed increments (deltas[k-1] = Delta_k).
inline LambdaChain lambda_chain(const SymMatrix& lambda, const DiscretePath& path, std::span<const SymMatrix> deltas) {
  const int r = path.levels();
  if (static_cast<int>(deltas.size()) != r) fail(ErrorCode::DimensionMismatch, "need one increment per level");
  linalg::require_square(lambda, static_cast<Eigen::Index>(path.dim()), "multiplier");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  LambdaChain chain;
  chain.lambdas.resize(static_cast<std::size_t>(r + 1));
  chain.logdets.assign(static_cast<std::size_t>(r + 1), nan);
  chain.log_ratios.assign(static_cast<std::size_t>(r), nan);
  chain.lambdas[static_cast<std::size_t>(r)] = lambda;
  for (int k = r - 1; k >= 0; --k)
    chain.lambdas[static_cast<std::size_t>(k)] =
        chain.lambdas[static_cast<std::size_t>(k + 1)] - path.x(k) * deltas[static_cast<std::size_t>(k)];

  const Vector ev0 = linalg::eigenvalues(chain.lambdas[0]);
  chain.min_eigenvalue0 = ev0.minCoeff();
  chain.det0 = ev0.prod();
  for (int k = 0; k <= r; ++k) {
    const auto& lk = chain.lambdas[static_cast<std::size_t>(k)];
    Eigen::LLT<Matrix> llt(lk);
    if (llt.info() != Eigen::Success) continue;
    const auto ld = linalg::logdet_spd(lk);
    if (ld) chain.logdets[static_cast<std::size_t>(k)] = *ld;
    if (k < r) chain.log_ratios[static_cast<std::size_t>(k)] = detail::log_ratio(llt, deltas[static_cast<std::size_t>(k)], path.x(k));
  }
  return chain;
}

inline LambdaChain lambda_chain(const Multiplier& lambda, const DiscretePath& path, const MixtureSpec& spec) {
  const auto deltas = delta_increments(spec, path);
  return lambda_chain(lambda.matrix(), path, deltas);
}

/// Value of the functional with every term reported separately.
/// total = trace + constant + logdet + field + cascade - theta.
struct FunctionalBreakdown {
  double total = 0.0;
  double trace_term = 0.0;    // 1/2 tr(Lambda Q)
  double const_term = 0.0;    // -n/2
  double logdet_term = 0.0;   // -1/2 log|Lambda|
  double field_term = 0.0;    // 1/2 (Lambda_0^{-1} h, h)
  double cascade_term = 0.0;  // 1/2 sum_k (1/x_k) log(|Lambda_{k+1}| / |Lambda_k|)
  double theta_term = 0.0;    // 1/2 sum_k x_k Sum(theta(Q_{k+1}) - theta(Q_k))
};

namespace detail {

/// 1/2 sum_k x_k v_k with v_k = Sum(theta(Q_{k+1}) - theta(Q_k)), summed from
/// the top level down.
inline double theta_sum(const DiscretePath& path, const MixtureSpec& spec) {
  const int r = path.levels();
  std::vector<SymMatrix> th;
  th.reserve(static_cast<std::size_t>(r + 1));
  for (int k = 0; k <= r; ++k) th.push_back(theta_matrix(spec, path.q(k)));
  double acc = 0.0;
  for (int k = r - 1; k >= 0; --k) {
    const double v = linalg::sum_entries(th[static_cast<std::size_t>(k + 1)] - th[static_cast<std::size_t>(k)]);
    acc += path.x(k) * v;
  }
  return 0.5 * acc;
}

}  // namespace detail

inline double theta_term(const DiscretePath& path, const MixtureSpec& spec) {
  if (path.dim() != spec.dim()) fail(ErrorCode::DimensionMismatch, "path and mixture dimensions differ");
  require_valid(path);
  return detail::theta_sum(path, spec);
}

/// 1/2 tr(Lambda_1^{-1} Delta_1): the x_0 -> 0 limit of the first cascade term.
inline double jacobi_limit_term(const SymMatrix& lambda1, const SymMatrix& delta1) {
  linalg::require_square(delta1, lambda1.rows(), "increment");
  Eigen::LLT<Matrix> llt(lambda1);
  if (llt.info() != Eigen::Success) fail(ErrorCode::Singular, "Lambda_1 must be positive definite");
  return 0.5 * llt.solve(delta1).trace();
}

/// (1 / 2x_0) log(|Lambda_1| / |Lambda_1 - x_0 Delta_1|).
inline double log_ratio_term(const SymMatrix& lambda1, const SymMatrix& delta1, double x0) {
  linalg::require_square(delta1, lambda1.rows(), "increment");
  if (!(x0 > 0.0)) fail(ErrorCode::InvalidArgument, "x_0 must be positive");
  Eigen::LLT<Matrix> llt(lambda1);
  if (llt.info() != Eigen::Success) fail(ErrorCode::Singular, "Lambda_1 must be positive definite");
  const Matrix l = llt.matrixL();
  Matrix tmp = l.triangularView<Eigen::Lower>().solve(delta1);
  const Vector mu = linalg::eigenvalues(linalg::symmetrize(l.triangularView<Eigen::Lower>().solve(tmp.transpose())));
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(1.0 - x0 * mu(i) > 0.0)) fail(ErrorCode::Divergent, "Lambda_1 - x_0 Delta_1 is not positive definite");
    s += std::log1p(-x0 * mu(i));
  }
  return -s / (2.0 * x0);
}

/// Both sides of the Gaussian quadratic-exponential identity for g ~ N(0, C):
///   (1/x) log E exp((x/2)(A^{-1}(y+g), y+g))
///     = (1/2x) log(|A| / |A - xC|) + 1/2 ((A - xC)^{-1} y, y).
/// `lhs` integrates the expectation in whitened coordinates g = F z with
/// F F^T = C; `rhs` is the displayed right-hand side.
struct GaussianIdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline GaussianIdentitySides gaussian_quadratic_identity(const SymMatrix& a, const SymMatrix& c, double x, const Vector& y) {
  const auto n = a.rows();
  linalg::require_square(a, n, "A");
  linalg::require_square(c, n, "C");
  if (y.size() != n) fail(ErrorCode::DimensionMismatch, "y must have length n");
  if (!(x > 0.0 && x <= 1.0)) fail(ErrorCode::InvalidArgument, "x must lie in (0, 1]");
  Eigen::LLT<Matrix> llt_a(a);
  if (llt_a.info() != Eigen::Success) fail(ErrorCode::InvalidArgument, "A must be positive definite");
  if (!linalg::check_psd(c).ok) fail(ErrorCode::NotPsd, "C must be positive semidefinite");
  const SymMatrix shifted = a - x * c;
  Eigen::LLT<Matrix> llt_s(shifted);
  if (llt_s.info() != Eigen::Success)
    fail(ErrorCode::Divergent, "A - xC is not positive definite; the expectation diverges");

  GaussianIdentitySides out;
  {
    const Matrix f = linalg::psd_factor(c);
    const Matrix ainv_f = llt_a.solve(f);
    const SymMatrix m = linalg::symmetrize(f.transpose() * ainv_f);
    const SymMatrix i_minus = SymMatrix::Identity(n, n) - x * m;
    Eigen::LLT<Matrix> llt_i(i_minus);
    if (llt_i.info() != Eigen::Success) fail(ErrorCode::Divergent, "I - x F^T A^{-1} F is not positive definite");
    const Vector ainv_y = llt_a.solve(y);
    const Vector b = f.transpose() * ainv_y;
    const double ld = *linalg::logdet_spd(i_minus);
    out.lhs = -ld / (2.0 * x) + 0.5 * y.dot(ainv_y) + 0.5 * x * b.dot(llt_i.solve(b));
  }
  {
    const double ld_a = *linalg::logdet_spd(a);
    const double ld_s = *linalg::logdet_spd(shifted);
    out.rhs = (ld_a - ld_s) / (2.0 * x) + 0.5 * y.dot(llt_s.solve(y));
  }
  return out;
}

/// Symmetric coordinate basis: (i, j) with i <= j. Coordinates of S are
/// S(i, j), so S = sum_a v_a E_a with E_a = e_i e_j^T + e_j e_i^T off the diagonal.
struct SymBasis {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;

  explicit SymBasis(Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::size_t size() const { return pairs.size(); }

  SymMatrix element(std::size_t a, Eigen::Index n) const {
    SymMatrix e = SymMatrix::Zero(n, n);
    const auto [i, j] = pairs[a];
    e(i, j) = 1.0;
    e(j, i) = 1.0;
    return e;
  }
  Vector coords(const SymMatrix& s) const {
    Vector v(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t a = 0; a < pairs.size(); ++a) v(static_cast<Eigen::Index>(a)) = s(pairs[a].first, pairs[a].second);
    return v;
  }
  SymMatrix matrix(const Vector& v, Eigen::Index n) const {
    SymMatrix s = SymMatrix::Zero(n, n);
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      const auto [i, j] = pairs[a];
      s(i, j) = v(static_cast<Eigen::Index>(a));
      s(j, i) = v(static_cast<Eigen::Index>(a));
    }
    return s;
  }
  /// Gradient coordinates (G, E_a)_F of a symmetric G.
  Vector dual(const SymMatrix& g) const {
    Vector v(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t a = 0; a < pairs.size(); ++a) {
      const auto [i, j] = pairs[a];
      v(static_cast<Eigen::Index>(a)) = (i == j) ? g(i, i) : g(i, j) + g(j, i);
    }
    return v;
  }
};

/// The functional for a fixed (path, Q, h, mixture), viewed as a function of
/// Lambda. Increments and the theta term are computed once.
class ParisiObjective {
 public:
  ParisiObjective(DiscretePath path, ConstraintMatrix q, ExternalField h, const MixtureSpec& spec)
      : path_(std::move(path)), q_(std::move(q)), h_(std::move(h)) {
    if (spec.dim() != q_.dim() || h_.dim() != q_.dim())
      fail(ErrorCode::DimensionMismatch, "mixture, constraint, and field dimensions differ");
    require_valid(path_, q_);
    deltas_ = delta_increments(spec, path_);
    theta_ = detail::theta_sum(path_, spec);
    const auto n = static_cast<Eigen::Index>(q_.dim());
    offset_ = SymMatrix::Zero(n, n);
    for (int k = 0; k < path_.levels(); ++k) offset_ += path_.x(k) * deltas_[static_cast<std::size_t>(k)];
  }

  const DiscretePath& path() const { return path_; }
  const ConstraintMatrix& constraint() const { return q_; }
  const ExternalField& field() const { return h_; }
  const std::vector<SymMatrix>& deltas() const { return deltas_; }
  double theta() const { return theta_; }
  std::size_t dim() const { return q_.dim(); }
  /// Lambda - Lambda_0 = sum_k x_k Delta_{k+1}.
  const SymMatrix& offset() const { return offset_; }

  LambdaChain chain(const SymMatrix& lambda) const { return lambda_chain(lambda, path_, deltas_); }

  /// Full breakdown; nullopt outside the admissible set.
  std::optional<FunctionalBreakdown> try_evaluate(const SymMatrix& lambda) const {
    const auto ch = chain(lambda);
    if (!ch.admissible()) return std::nullopt;
    const int r = path_.levels();
    FunctionalBreakdown b;
    b.trace_term = 0.5 * linalg::trace_product(lambda, q_.matrix());
    b.const_term = -0.5 * static_cast<double>(dim());
    b.logdet_term = -0.5 * ch.logdets[static_cast<std::size_t>(r)];
    Eigen::LLT<Matrix> llt0(ch.lambdas[0]);
    b.field_term = 0.5 * h_.h.dot(llt0.solve(h_.h));
    double cascade = 0.0;
    for (int k = 0; k < r; ++k) cascade += ch.log_ratios[static_cast<std::size_t>(k)] / path_.x(k);
    b.cascade_term = 0.5 * cascade;
    b.theta_term = theta_;
    b.total = b.trace_term + b.const_term + b.logdet_term + b.field_term + b.cascade_term - b.theta_term;
    if (!std::isfinite(b.total)) return std::nullopt;
    return b;
  }

  FunctionalBreakdown evaluate(const SymMatrix& lambda) const {
    linalg::require_square(lambda, static_cast<Eigen::Index>(dim()), "multiplier");
    auto b = try_evaluate(lambda);
    if (!b) {
      std::ostringstream os;
      os << "Lambda_0 is not positive definite (smallest eigenvalue " << chain(lambda).min_eigenvalue0 << ")";
      fail(ErrorCode::NotInL, os.str());
    }
    return *b;
  }

  std::optional<double> value(const SymMatrix& lambda) const {
    auto b = try_evaluate(lambda);
    if (!b) return std::nullopt;
    return b->total;
  }

  /// G with (G, B)_F equal to the directional derivative along symmetric B.
  SymMatrix gradient(const SymMatrix& lambda) const {
    const auto ch = chain(lambda);
    if (!ch.admissible()) fail(ErrorCode::NotInL, "Lambda_0 is not positive definite");
    const int r = path_.levels();
    const auto n = static_cast<Eigen::Index>(dim());
    const SymMatrix ident = SymMatrix::Identity(n, n);
    std::vector<Matrix> inv(static_cast<std::size_t>(r + 1));
    for (int k = 0; k <= r; ++k) inv[static_cast<std::size_t>(k)] = Eigen::LLT<Matrix>(ch.lambdas[static_cast<std::size_t>(k)]).solve(ident);
    const Vector u = inv[0] * h_.h;
    Matrix g = q_.matrix() - inv[static_cast<std::size_t>(r)] - u * u.transpose();
    for (int k = 0; k < r; ++k) {
      const auto& d = deltas_[static_cast<std::size_t>(k)];
      if (d.cwiseAbs().maxCoeff() == 0.0) continue;
      g -= inv[static_cast<std::size_t>(k + 1)] * d * inv[static_cast<std::size_t>(k)];
    }
    return linalg::symmetrize(0.5 * g);
  }

  /// Hessian in the SymBasis coordinates.
  Matrix hessian(const SymMatrix& lambda, const SymBasis& basis) const {
    const auto ch = chain(lambda);
    if (!ch.admissible()) fail(ErrorCode::NotInL, "Lambda_0 is not positive definite");
    const int r = path_.levels();
    const auto n = static_cast<Eigen::Index>(dim());
    const auto m = static_cast<Eigen::Index>(basis.size());
    const SymMatrix ident = SymMatrix::Identity(n, n);
    std::vector<Matrix> inv(static_cast<std::size_t>(r + 1));
    for (int k = 0; k <= r; ++k) inv[static_cast<std::size_t>(k)] = Eigen::LLT<Matrix>(ch.lambdas[static_cast<std::size_t>(k)]).solve(ident);

    // Coefficient of tr(P_k B P_k C) for P_k = Lambda_k^{-1}.
    std::vector<double> weight(static_cast<std::size_t>(r + 1), 0.0);
    weight[static_cast<std::size_t>(r)] += 1.0;
    for (int k = 0; k < r; ++k) {
      if (deltas_[static_cast<std::size_t>(k)].cwiseAbs().maxCoeff() == 0.0) continue;
      weight[static_cast<std::size_t>(k)] += 1.0 / path_.x(k);
      weight[static_cast<std::size_t>(k + 1)] -= 1.0 / path_.x(k);
    }

    std::vector<SymMatrix> e;
    e.reserve(basis.size());
    for (std::size_t a = 0; a < basis.size(); ++a) e.push_back(basis.element(a, n));

    Matrix hess = Matrix::Zero(m, m);
    for (int k = 0; k <= r; ++k) {
      const double w = weight[static_cast<std::size_t>(k)];
      if (w == 0.0) continue;
      const auto& p = inv[static_cast<std::size_t>(k)];
      std::vector<Matrix> pe;
      pe.reserve(basis.size());
      for (std::size_t a = 0; a < basis.size(); ++a) pe.push_back(p * e[a]);
      for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = a; b < m; ++b) {
          const double t = w * linalg::trace_product(pe[static_cast<std::size_t>(a)], pe[static_cast<std::size_t>(b)]);
          hess(a, b) += t;
          if (a != b) hess(b, a) += t;
        }
    }
    const Vector u = inv[0] * h_.h;
    if (u.squaredNorm() > 0.0) {
      Matrix w(n, m);
      for (Eigen::Index a = 0; a < m; ++a) w.col(a) = e[static_cast<std::size_t>(a)] * u;
      hess += 2.0 * w.transpose() * inv[0] * w;
    }
    return 0.5 * linalg::symmetrize(hess);
  }

 private:
  DiscretePath path_;
  ConstraintMatrix q_;
  ExternalField h_;
  std::vector<SymMatrix> deltas_;
  double theta_ = 0.0;
  SymMatrix offset_;
};

inline FunctionalBreakdown evaluate(const Multiplier& lambda, const DiscretePath& path, const ConstraintMatrix& q,
                                    const ExternalField& h, const MixtureSpec& spec) {
  return ParisiObjective(path, q, h, spec).evaluate(lambda.matrix());
}

/// -1/2 log|Lambda| + 1/2 (Lambda_0^{-1} h, h) + 1/2 sum_k (1/x_k) log(|Lambda_{k+1}|/|Lambda_k|).
inline double closed_form_Y0(const Multiplier& lambda, const DiscretePath& path, const ExternalField& h,
                             const MixtureSpec& spec) {
  if (h.dim() != path.dim() || lambda.dim() != path.dim())
    fail(ErrorCode::DimensionMismatch, "multiplier, path, and field dimensions differ");
  const auto ch = lambda_chain(lambda, path, spec);
  if (!ch.admissible()) fail(ErrorCode::NotInL, "Lambda_0 is not positive definite");
  const int r = path.levels();
  double cascade = 0.0;
  for (int k = 0; k < r; ++k) cascade += ch.log_ratios[static_cast<std::size_t>(k)] / path.x(k);
  Eigen::LLT<Matrix> llt0(ch.lambdas[0]);
  return -0.5 * ch.logdets[static_cast<std::size_t>(r)] + 0.5 * h.h.dot(llt0.solve(h.h)) + 0.5 * cascade;
}

}  // namespace spinglass
