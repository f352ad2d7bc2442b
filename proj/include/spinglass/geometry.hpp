#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spinglass/error.hpp"
#include "spinglass/linalg.hpp"

namespace spinglass {

/// Minimum allowed gap between consecutive cascade parameters x_{k-1} < x_k.
inline constexpr double kMinGap = 1e-9;

/// Prescribed overlap constraint: symmetric PSD, unit diagonal, off-diagonal
/// entries in [-1, 1].
class ConstraintMatrix {
 public:
  explicit ConstraintMatrix(SymMatrix q) : q_(std::move(q)) {
    if (!linalg::is_square(q_) || q_.rows() == 0)
      fail(ErrorCode::DimensionMismatch, "constraint matrix must be square and nonempty");
    if (!linalg::all_finite(q_)) fail(ErrorCode::InvalidArgument, "constraint entries must be finite");
    if (!linalg::is_exactly_symmetric(q_)) fail(ErrorCode::InvalidArgument, "constraint must be symmetric");
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
      if (q_(i, i) != 1.0) fail(ErrorCode::InvalidArgument, "constraint diagonal must equal 1");
      for (Eigen::Index j = 0; j < q_.cols(); ++j)
        if (i != j && (q_(i, j) < -1.0 || q_(i, j) > 1.0))
          fail(ErrorCode::InvalidArgument, "constraint off-diagonal entries must lie in [-1, 1]");
    }
    eigenvalues_ = linalg::eigenvalues(q_);
    const auto psd = linalg::check_psd(q_);
    if (!psd.ok) {
      std::ostringstream os;
      os << "constraint must be positive semidefinite (smallest eigenvalue " << psd.raw_min_eigenvalue << ")";
      fail(ErrorCode::NotPsd, os.str());
    }
  }

  static ConstraintMatrix identity(std::size_t n) {
    return ConstraintMatrix(SymMatrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  }

  std::size_t dim() const { return static_cast<std::size_t>(q_.rows()); }
  const SymMatrix& matrix() const { return q_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  double min_eigenvalue() const { return eigenvalues_.minCoeff(); }
  double max_eigenvalue() const { return eigenvalues_.maxCoeff(); }

  /// det Q <= 1e-12 * lambda_max^n, with eigenvalues clamped at 0.
  bool is_degenerate() const {
    const double lmax = max_eigenvalue();
    double det = 1.0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) det *= std::max(eigenvalues_(i), 0.0);
    return det <= 1e-12 * std::pow(lmax, static_cast<double>(dim()));
  }

  friend bool operator==(const ConstraintMatrix& a, const ConstraintMatrix& b) { return a.q_ == b.q_; }

 private:
  SymMatrix q_;
  Vector eigenvalues_;
};

struct ExternalField {
  Vector h;

  ExternalField() = default;
  explicit ExternalField(Vector v) : h(std::move(v)) {
    if (!h.allFinite()) fail(ErrorCode::InvalidArgument, "external field entries must be finite");
  }
  static ExternalField zero(std::size_t n) { return ExternalField(Vector::Zero(static_cast<Eigen::Index>(n))); }
  std::size_t dim() const { return static_cast<std::size_t>(h.size()); }
  friend bool operator==(const ExternalField& a, const ExternalField& b) { return a.h == b.h; }
};

/// Left-continuous monotone step path pi(x) = Q_k for x_{k-1} < x <= x_k,
/// stored as breakpoints (x_{-1} = 0, x_0, ..., x_r = 1) and levels
/// (Q_0 = 0, ..., Q_r = Q). Construction checks shapes only; use
/// validate_path for the value invariants.
class DiscretePath {
 public:
  DiscretePath(std::vector<double> breakpoints, std::vector<SymMatrix> levels)
      : x_(std::move(breakpoints)), q_(std::move(levels)) {
    if (q_.size() < 2) fail(ErrorCode::InvalidPath, "path needs at least one level (r >= 1)");
    if (x_.size() != q_.size() + 1)
      fail(ErrorCode::InvalidPath, "path needs r+2 breakpoints for r+1 overlap matrices");
    const auto n = q_.front().rows();
    for (std::size_t k = 0; k < q_.size(); ++k)
      if (q_[k].rows() != n || q_[k].cols() != n || n == 0)
        fail(ErrorCode::InvalidPath, "overlap matrix " + std::to_string(k) + " has inconsistent shape");
  }

  /// Number of replica-symmetry-breaking levels r.
  int levels() const { return static_cast<int>(q_.size()) - 1; }
  std::size_t dim() const { return static_cast<std::size_t>(q_.front().rows()); }

  /// Cascade parameter x_k for k in [-1, r].
  double x(int k) const { return x_.at(static_cast<std::size_t>(k + 1)); }
  const SymMatrix& q(int k) const { return q_.at(static_cast<std::size_t>(k)); }

  std::span<const double> breakpoints() const { return x_; }
  const std::vector<SymMatrix>& overlaps() const { return q_; }

  /// pi(t) with left continuity; pi(t) = Q_0 for t <= 0.
  const SymMatrix& at(double t) const {
    for (int k = 0; k <= levels(); ++k)
      if (t <= x(k)) return q_[static_cast<std::size_t>(k)];
    return q_.back();
  }

  friend bool operator==(const DiscretePath& a, const DiscretePath& b) { return a.x_ == b.x_ && a.q_ == b.q_; }

 private:
  std::vector<double> x_;
  std::vector<SymMatrix> q_;
};

struct Violation {
  std::string invariant;
  int index = 0;
  double magnitude = 0.0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
      if (i) os << "; ";
      os << violations[i].message;
    }
    return os.str();
  }
};

namespace detail {

inline void validate_shape_free(const DiscretePath& path, ValidationReport& report) {
  const int r = path.levels();
  auto add = [&](std::string inv, int idx, double mag, std::string msg) {
    report.violations.push_back({std::move(inv), idx, mag, std::move(msg)});
  };
  for (int k = -1; k <= r; ++k)
    if (!std::isfinite(path.x(k))) add("x_finite", k, path.x(k), "x_" + std::to_string(k) + " is not finite");
  if (path.x(-1) != 0.0) add("x_start", -1, path.x(-1), "x_{-1} must equal 0");
  if (path.x(r) != 1.0) add("x_end", r, path.x(r), "x_r must equal 1");
  for (int k = 0; k <= r; ++k) {
    const double gap = path.x(k) - path.x(k - 1);
    if (!(gap >= kMinGap)) {
      std::ostringstream os;
      os << "x must increase strictly: x_" << k << " - x_" << (k - 1) << " = " << gap << " at index " << k;
      add("x_increasing", k, gap, os.str());
    }
  }
  for (int k = 0; k <= r; ++k) {
    const auto& m = path.q(k);
    if (!m.allFinite()) {
      add("q_finite", k, 0.0, "Q_" + std::to_string(k) + " has non-finite entries");
      return;
    }
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym != 0.0) add("q_symmetric", k, asym, "Q_" + std::to_string(k) + " is not symmetric");
  }
  const double q0 = path.q(0).cwiseAbs().maxCoeff();
  if (q0 != 0.0) add("q_start_zero", 0, q0, "Q_0 must be the zero matrix");
  for (int k = 1; k <= r; ++k) {
    const auto psd = linalg::check_psd(linalg::symmetrize(path.q(k) - path.q(k - 1)));
    if (!psd.ok) {
      std::ostringstream os;
      os << "increment Q_" << k << " - Q_" << (k - 1) << " is not PSD (smallest eigenvalue "
         << psd.raw_min_eigenvalue << ") at index " << k;
      add("q_increment_psd", k, psd.raw_min_eigenvalue, os.str());
    }
  }
}

}  // namespace detail

/// Structural validation without a target constraint.
inline ValidationReport validate_path(const DiscretePath& path) {
  ValidationReport report;
  detail::validate_shape_free(path, report);
  return report;
}

inline ValidationReport validate_path(const DiscretePath& path, const ConstraintMatrix& target) {
  ValidationReport report;
  if (path.dim() != target.dim()) {
    report.violations.push_back({"dimension", -1, static_cast<double>(path.dim()),
                                 "path dimension does not match the constraint dimension"});
    return report;
  }
  detail::validate_shape_free(path, report);
  const int r = path.levels();
  const double diff = (path.q(r) - target.matrix()).cwiseAbs().maxCoeff();
  if (diff != 0.0) report.violations.push_back({"q_end_target", r, diff, "Q_r must equal the constraint Q"});
  return report;
}

inline void require_valid(const DiscretePath& path) {
  const auto report = validate_path(path);
  if (!report.ok()) fail(ErrorCode::InvalidPath, report.summary());
}

inline void require_valid(const DiscretePath& path, const ConstraintMatrix& target) {
  const auto report = validate_path(path, target);
  if (!report.ok()) fail(ErrorCode::InvalidPath, report.summary());
}

/// Integral over [0, 1] of the entrywise l1 distance between two step paths,
/// computed exactly on the merged breakpoint grid.
inline double path_distance(const DiscretePath& a, const DiscretePath& b) {
  if (a.dim() != b.dim()) fail(ErrorCode::DimensionMismatch, "paths have different dimensions");
  std::vector<double> grid(a.breakpoints().begin(), a.breakpoints().end());
  grid.insert(grid.end(), b.breakpoints().begin(), b.breakpoints().end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double total = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double lo = std::max(grid[i - 1], 0.0);
    const double hi = std::min(grid[i], 1.0);
    if (!(hi > lo)) continue;
    total += (hi - lo) * (a.at(hi) - b.at(hi)).cwiseAbs().sum();
  }
  return total;
}

/// Inserts breakpoint x_new inside (x_{k-1}, x_k), duplicating Q_k, so the
/// step function is unchanged and the path gains one level.
inline DiscretePath refine_path(const DiscretePath& path, int k, double x_new) {
  const int r = path.levels();
  if (k < 0 || k > r) fail(ErrorCode::IndexOutOfRange, "refinement level out of range");
  const double lo = path.x(k - 1);
  const double hi = path.x(k);
  if (!(x_new > lo && x_new < hi)) {
    std::ostringstream os;
    os << "x_new = " << x_new << " outside the open interval (" << lo << ", " << hi << ")";
    fail(ErrorCode::InvalidArgument, os.str());
  }
  if (x_new - lo < kMinGap || hi - x_new < kMinGap)
    fail(ErrorCode::InvalidArgument, "x_new closer than the minimum gap to a neighbouring breakpoint");
  std::vector<double> xs(path.breakpoints().begin(), path.breakpoints().end());
  std::vector<SymMatrix> qs = path.overlaps();
  xs.insert(xs.begin() + (k + 1), x_new);
  qs.insert(qs.begin() + k, path.q(k));
  return DiscretePath(std::move(xs), std::move(qs));
}

/// Path with Q_k = q_k * Q. `xs` holds x_0..x_{r-1} (x_{-1} = 0 and x_r = 1
/// are implied) and `qs` holds q_1..q_{r-1} (q_0 = 0, q_r = 1 implied).
inline DiscretePath scalar_profile_path(std::span<const double> xs, std::span<const double> qs,
                                        const ConstraintMatrix& target) {
  const std::size_t r = xs.size();
  if (r == 0 || qs.size() + 1 != r) fail(ErrorCode::InvalidArgument, "scalar profile needs r x-values and r-1 q-values");
  const auto n = static_cast<Eigen::Index>(target.dim());
  std::vector<double> b{0.0};
  b.insert(b.end(), xs.begin(), xs.end());
  b.push_back(1.0);
  std::vector<SymMatrix> levels{SymMatrix::Zero(n, n)};
  for (double q : qs) levels.push_back(q * target.matrix());
  levels.push_back(target.matrix());
  return DiscretePath(std::move(b), std::move(levels));
}

}  // namespace spinglass
