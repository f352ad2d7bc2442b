#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spinglass/error.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"

namespace spinglass {

/// x^p by repeated squaring.
inline double ipow(double x, int p) {
  double result = 1.0;
  double base = x;
  unsigned e = static_cast<unsigned>(p);
  while (e) {
    if (e & 1u) result *= base;
    base *= base;
    e >>= 1u;
  }
  return result;
}

/// Inverse temperatures beta_p(j) of an even mixed p-spin model on n copies.
/// Keys are even degrees p >= 2; an empty map is the zero mixture.
class MixtureSpec {
 public:
  static constexpr int kMaxDegree = 64;

  MixtureSpec(std::size_t n, std::map<int, Vector> terms) : n_(n), terms_(std::move(terms)) {
    if (n_ == 0) fail(ErrorCode::InvalidArgument, "mixture needs n >= 1 copies");
    for (const auto& [p, beta] : terms_) {
      if (p < 2 || p % 2 != 0)
        fail(ErrorCode::InvalidArgument, "mixture degree " + std::to_string(p) + " must be even and >= 2");
      if (p > kMaxDegree) fail(ErrorCode::InvalidArgument, "mixture degree " + std::to_string(p) + " exceeds 64");
      if (static_cast<std::size_t>(beta.size()) != n_)
        fail(ErrorCode::DimensionMismatch, "beta_" + std::to_string(p) + " must have length " + std::to_string(n_));
      if (!beta.allFinite()) fail(ErrorCode::InvalidArgument, "beta_" + std::to_string(p) + " has non-finite entries");
    }
    for (std::size_t j = 0; j < n_; ++j) {
      double s = 0.0;
      for (const auto& [p, beta] : terms_) s += std::ldexp(beta(static_cast<Eigen::Index>(j)) * beta(static_cast<Eigen::Index>(j)), p);
      if (!std::isfinite(s)) fail(ErrorCode::InvalidArgument, "sum_p 2^p beta_p(j)^2 overflows");
    }
  }

  static MixtureSpec zero(std::size_t n) { return MixtureSpec(n, {}); }

  /// Same beta_p for every copy.
  static MixtureSpec uniform(std::size_t n, const std::map<int, double>& betas) {
    std::map<int, Vector> t;
    for (const auto& [p, b] : betas) t.emplace(p, Vector::Constant(static_cast<Eigen::Index>(n), b));
    return MixtureSpec(n, std::move(t));
  }

  std::size_t dim() const { return n_; }
  const std::map<int, Vector>& terms() const { return terms_; }
  bool is_zero() const {
    for (const auto& [p, beta] : terms_)
      if (beta.cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
  }
  int max_degree() const { return terms_.empty() ? 0 : terms_.rbegin()->first; }

  /// Multiplies every beta by `factor`.
  MixtureSpec scaled(double factor) const {
    auto t = terms_;
    for (auto& [p, beta] : t) beta *= factor;
    return MixtureSpec(n_, std::move(t));
  }

  friend bool operator==(const MixtureSpec& a, const MixtureSpec& b) { return a.n_ == b.n_ && a.terms_ == b.terms_; }

 private:
  std::size_t n_;
  std::map<int, Vector> terms_;
};

namespace detail {
inline void check_index(const MixtureSpec& spec, std::size_t j) {
  if (j >= spec.dim())
    fail(ErrorCode::IndexOutOfRange, "copy index " + std::to_string(j) + " out of range for n = " + std::to_string(spec.dim()));
}
inline void check_argument(double x) {
  if (!(std::abs(x) <= 2.0)) fail(ErrorCode::InvalidArgument, "mixture argument must satisfy |x| <= 2");
}
}  // namespace detail

// Indices j, j2 are zero-based.

inline double xi_scalar(const MixtureSpec& spec, std::size_t j, std::size_t j2, double x) {
  detail::check_index(spec, j);
  detail::check_index(spec, j2);
  detail::check_argument(x);
  double s = 0.0;
  for (const auto& [p, beta] : spec.terms())
    s += beta(static_cast<Eigen::Index>(j)) * beta(static_cast<Eigen::Index>(j2)) * ipow(x, p);
  return s;
}

inline double xi_prime_scalar(const MixtureSpec& spec, std::size_t j, std::size_t j2, double x) {
  detail::check_index(spec, j);
  detail::check_index(spec, j2);
  detail::check_argument(x);
  double s = 0.0;
  for (const auto& [p, beta] : spec.terms())
    s += p * beta(static_cast<Eigen::Index>(j)) * beta(static_cast<Eigen::Index>(j2)) * ipow(x, p - 1);
  return s;
}

namespace detail {
template <class F>
SymMatrix entrywise(const MixtureSpec& spec, const SymMatrix& a, F&& f) {
  linalg::require_square(a, static_cast<Eigen::Index>(spec.dim()), "mixture matrix argument");
  const auto n = a.rows();
  SymMatrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = i; k < n; ++k) {
      const double v = f(static_cast<std::size_t>(i), static_cast<std::size_t>(k), a(i, k));
      out(i, k) = v;
      out(k, i) = v;
    }
  return out;
}
}  // namespace detail

/// (xi(A))_{jj'} = xi_{jj'}(A_{jj'}); reads the upper triangle of A.
inline SymMatrix xi_matrix(const MixtureSpec& spec, const SymMatrix& a) {
  return detail::entrywise(spec, a, [&](std::size_t i, std::size_t k, double x) { return xi_scalar(spec, i, k, x); });
}

inline SymMatrix xi_prime_matrix(const MixtureSpec& spec, const SymMatrix& a) {
  return detail::entrywise(spec, a,
                           [&](std::size_t i, std::size_t k, double x) { return xi_prime_scalar(spec, i, k, x); });
}

/// theta(A) = A o xi'(A) - xi(A).
inline SymMatrix theta_matrix(const MixtureSpec& spec, const SymMatrix& a) {
  return detail::entrywise(spec, a, [&](std::size_t i, std::size_t k, double x) {
    return x * xi_prime_scalar(spec, i, k, x) - xi_scalar(spec, i, k, x);
  });
}

/// Delta_k = xi'(Q_k) - xi'(Q_{k-1}) for k = 1..r (element k-1 of the result).
/// Each increment is PSD by the Schur product theorem; a violation beyond the
/// relative tolerance throws NotPsd naming k and the eigenvalue.
inline std::vector<SymMatrix> delta_increments(const MixtureSpec& spec, const DiscretePath& path) {
  if (path.dim() != spec.dim()) fail(ErrorCode::DimensionMismatch, "path and mixture dimensions differ");
  require_valid(path);
  std::vector<SymMatrix> out;
  out.reserve(static_cast<std::size_t>(path.levels()));
  SymMatrix prev = xi_prime_matrix(spec, path.q(0));
  for (int k = 1; k <= path.levels(); ++k) {
    SymMatrix cur = xi_prime_matrix(spec, path.q(k));
    SymMatrix d = cur - prev;
    const auto psd = linalg::check_psd(d);
    if (!psd.ok) {
      std::ostringstream os;
      os << "Delta_" << k << " is not PSD (smallest eigenvalue " << psd.raw_min_eigenvalue << ")";
      fail(ErrorCode::NotPsd, os.str());
    }
    out.push_back(std::move(d));
    prev = std::move(cur);
  }
  return out;
}

}  // namespace spinglass
