#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include <Eigen/QR>

#include "spinglass/functional.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/rng.hpp"

// Random well-conditioned instances for self-checks and sweeps.

namespace spinglass::instances {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

/// SPD matrix with eigenvalues in [lo, hi].
inline SymMatrix spd(Eigen::Index n, Rng& rng, double lo = 0.5, double hi = 2.0) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, n, rng));
  const Matrix u = qr.householderQ();
  std::uniform_real_distribution<double> ev(lo, hi);
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = ev(rng);
  return linalg::mirrored(linalg::symmetrize(u * d.asDiagonal() * u.transpose()));
}

/// Correlation matrix with smallest eigenvalue bounded away from 0.
inline ConstraintMatrix constraint(Eigen::Index n, Rng& rng) {
  const SymMatrix s = spd(n, rng, 0.3, 1.5);
  const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
  SymMatrix q = linalg::mirrored(linalg::symmetrize(d.asDiagonal() * s * d.asDiagonal()));
  for (Eigen::Index i = 0; i < n; ++i) q(i, i) = 1.0;
  return ConstraintMatrix(std::move(q));
}

/// Random increasing breakpoints x_0 < .. < x_{r-1} in (0.05, 0.95).
inline std::vector<double> breakpoints(int r, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> xs;
  for (;;) {
    xs.clear();
    for (int i = 0; i < r; ++i) xs.push_back(u(rng));
    std::sort(xs.begin(), xs.end());
    bool spaced = true;
    for (int i = 1; i < r; ++i) spaced = spaced && xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(i - 1)] > 0.02;
    if (spaced) return xs;
  }
}

/// Q_k = L D_k L^T with diagonal D_k increasing from 0 to I, Q_r = Q.
inline DiscretePath path(const ConstraintMatrix& q, int r, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(q.dim());
  const Matrix l = Eigen::LLT<Matrix>(q.matrix()).matrixL();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vector> weights;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> cuts;
    for (int k = 0; k < r - 1; ++k) cuts.push_back(u(rng));
    std::sort(cuts.begin(), cuts.end());
    Vector w(r + 1);
    w(0) = 0.0;
    for (int k = 0; k < r - 1; ++k) w(k + 1) = cuts[static_cast<std::size_t>(k)];
    w(r) = 1.0;
    weights.push_back(w);
  }
  std::vector<double> b{0.0};
  const auto xs = breakpoints(r, rng);
  b.insert(b.end(), xs.begin(), xs.end());
  b.push_back(1.0);
  std::vector<SymMatrix> levels{SymMatrix::Zero(n, n)};
  for (int k = 1; k < r; ++k) {
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = weights[static_cast<std::size_t>(i)](k);
    levels.push_back(linalg::mirrored(linalg::symmetrize(l * d.asDiagonal() * l.transpose())));
  }
  levels.push_back(q.matrix());
  return DiscretePath(std::move(b), std::move(levels));
}

/// Degrees 2 and (sometimes) 4 with betas in [0.1, 0.8].
inline MixtureSpec mixture(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.8);
  std::map<int, Vector> t;
  Vector b2(static_cast<Eigen::Index>(n));
  for (auto& v : b2) v = u(rng);
  t.emplace(2, b2);
  if (std::bernoulli_distribution(0.5)(rng)) {
    Vector b4(static_cast<Eigen::Index>(n));
    for (auto& v : b4) v = 0.5 * u(rng);
    t.emplace(4, b4);
  }
  return MixtureSpec(n, std::move(t));
}

inline ExternalField field(std::size_t n, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector h(static_cast<Eigen::Index>(n));
  for (auto& v : h) v = u(rng);
  return ExternalField(std::move(h));
}

/// Lambda = Lambda_0 + sum_k x_k Delta_{k+1} with a random SPD Lambda_0.
inline Multiplier admissible_lambda(const ParisiObjective& objective, Rng& rng, double lo = 0.5, double hi = 2.0) {
  const SymMatrix l0 = spd(static_cast<Eigen::Index>(objective.dim()), rng, lo, hi);
  return Multiplier(linalg::mirrored(linalg::symmetrize(l0 + objective.offset())));
}

}  // namespace spinglass::instances
