#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "spinglass/error.hpp"

namespace spinglass {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric n x n matrix. Stored densely; every producer in the library
/// writes both triangles, so (i,j) == (j,i) holds bit-for-bit.
using SymMatrix = Eigen::MatrixXd;

/// Relative PSD tolerance: an eigenvalue counts as nonnegative when it is
/// above -kPsdTolerance * max|eigenvalue|.
inline constexpr double kPsdTolerance = 1e-10;

namespace linalg {

inline bool is_square(const Matrix& a) { return a.rows() == a.cols(); }

inline bool is_exactly_symmetric(const Matrix& a) {
  if (!is_square(a)) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (a(i, j) != a(j, i)) return false;
  return true;
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

/// Averages the two triangles.
inline SymMatrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline void require_square(const Matrix& a, Eigen::Index n, const char* what) {
  if (a.rows() != n || a.cols() != n)
    fail(ErrorCode::DimensionMismatch, std::string(what) + ": expected " + std::to_string(n) + "x" +
                                           std::to_string(n) + ", got " + std::to_string(a.rows()) +
                                           "x" + std::to_string(a.cols()));
}

inline Vector eigenvalues(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const SymMatrix& a) {
  if (a.size() == 0) return 0.0;
  return eigenvalues(a).minCoeff();
}

struct PsdCheck {
  bool ok = true;
  double min_eigenvalue = 0.0;  // clamped to 0 when inside the tolerance band
  double raw_min_eigenvalue = 0.0;
  double scale = 0.0;  // largest eigenvalue magnitude
};

inline PsdCheck check_psd(const SymMatrix& a, double tol = kPsdTolerance) {
  PsdCheck out;
  if (a.size() == 0) return out;
  const Vector ev = eigenvalues(a);
  out.raw_min_eigenvalue = ev.minCoeff();
  out.scale = ev.cwiseAbs().maxCoeff();
  const double threshold = -tol * out.scale;
  out.ok = out.raw_min_eigenvalue >= threshold;
  out.min_eigenvalue = (out.ok && out.raw_min_eigenvalue < 0.0) ? 0.0 : out.raw_min_eigenvalue;
  return out;
}

/// log det of a symmetric positive definite matrix via Cholesky; nullopt if
/// the factorisation fails.
inline std::optional<double> logdet_spd(const SymMatrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double d = l(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    s += std::log(d);
  }
  return 2.0 * s;
}

inline double trace_product(const Matrix& a, const Matrix& b) { return (a.cwiseProduct(b.transpose())).sum(); }

/// Frobenius inner product (A, B)_F.
inline double frobenius(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

inline double sum_entries(const Matrix& a) { return a.sum(); }

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
inline SymMatrix psd_sqrt(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// A factor F with F F^T = A for PSD A (eigenvalues clamped at 0).
inline Matrix psd_factor(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

inline SymMatrix mirrored(SymMatrix a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) a(j, i) = a(i, j);
  return a;
}

}  // namespace linalg
}  // namespace spinglass
