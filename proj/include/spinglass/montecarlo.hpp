#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/QR>

#include "spinglass/cascade.hpp"
#include "spinglass/error.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

inline constexpr std::size_t kMaxSpins = 64;
inline constexpr int kMaxTensorDegree = 4;

/// Raw (unsymmetrised) i.i.d. N(0,1) coupling tensors, one per degree,
/// shared by all copies. Entry (i_1..i_p) sits at i_1 N^{p-1} + ... + i_p.
struct DisorderRealization {
  std::size_t n_spins = 0;
  std::map<int, std::vector<double>> tensors;
  std::uint64_t seed = 0;
};

inline DisorderRealization generate_disorder(const MixtureSpec& spec, std::size_t n_spins, std::uint64_t seed) {
  if (n_spins == 0 || n_spins > kMaxSpins) fail(ErrorCode::BudgetExceeded, "N must lie in [1, 64]");
  if (spec.max_degree() > kMaxTensorDegree) fail(ErrorCode::BudgetExceeded, "tensor degree above 4 is not supported");
  DisorderRealization d;
  d.n_spins = n_spins;
  d.seed = seed;
  for (const auto& [p, beta] : spec.terms()) {
    std::size_t size = 1;
    for (int i = 0; i < p; ++i) size *= n_spins;
    std::vector<double> g(size);
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(p)));
    std::normal_distribution<double> gauss;
    for (auto& v : g) v = gauss(rng);
    d.tensors.emplace(p, std::move(g));
  }
  return d;
}

/// n x N configuration; row j is copy sigma(j).
struct SpinBlock {
  Matrix sigma;

  std::size_t copies() const { return static_cast<std::size_t>(sigma.rows()); }
  std::size_t spins() const { return static_cast<std::size_t>(sigma.cols()); }
  SymMatrix overlap() const { return linalg::mirrored(sigma * sigma.transpose() / static_cast<double>(sigma.cols())); }
};

namespace detail {

// sum g_{i_1..i_p} s_{i_1}..s_{i_p}, contracting the last index first.
inline double contract(const std::vector<double>& g, int p, const double* s, std::size_t n) {
  if (p == 2) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        g.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::Map<const Vector> v(s, static_cast<Eigen::Index>(n));
    return v.dot(m * v);
  }
  std::vector<double> t = g;
  std::size_t size = t.size();
  for (int level = 0; level < p; ++level) {
    const std::size_t out = size / n;
    for (std::size_t i = 0; i < out; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < n; ++a) acc += t[i * n + a] * s[a];
      t[i] = acc;
    }
    size = out;
  }
  return t[0];
}

}  // namespace detail

/// H(sigma) = sum_j sum_p beta_p(j) N^{-(p-1)/2} sum g_{i_1..i_p} sigma_{i_1}(j)..sigma_{i_p}(j).
inline double hamiltonian(const SpinBlock& s, const DisorderRealization& disorder, const MixtureSpec& spec) {
  const std::size_t n_spins = disorder.n_spins;
  if (s.spins() != n_spins) fail(ErrorCode::DimensionMismatch, "configuration length differs from disorder size");
  if (s.copies() != spec.dim()) fail(ErrorCode::DimensionMismatch, "configuration has the wrong number of copies");
  if (spec.max_degree() > kMaxTensorDegree) fail(ErrorCode::BudgetExceeded, "tensor degree above 4 is not supported");
  // row-major copy so each copy is contiguous
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = s.sigma;
  double h = 0.0;
  for (const auto& [p, beta] : spec.terms()) {
    const auto it = disorder.tensors.find(p);
    if (it == disorder.tensors.end()) fail(ErrorCode::InvalidArgument, "disorder has no tensor of degree " + std::to_string(p));
    const double norm = std::pow(static_cast<double>(n_spins), -0.5 * (p - 1));
    for (std::size_t j = 0; j < s.copies(); ++j) {
      const double b = beta(static_cast<Eigen::Index>(j));
      if (b == 0.0) continue;
      h += b * norm * detail::contract(it->second, p, rows.row(static_cast<Eigen::Index>(j)).data(), n_spins);
    }
  }
  return h;
}

/// sum_j h(j) sum_i sigma_i(j).
inline double field_energy(const SpinBlock& s, const ExternalField& h) {
  if (h.dim() != s.copies()) fail(ErrorCode::DimensionMismatch, "field length differs from number of copies");
  return h.h.dot(s.sigma.rowwise().sum());
}

inline Matrix constraint_cholesky(const ConstraintMatrix& q) {
  Eigen::LLT<Matrix> llt(q.matrix());
  if (llt.info() != Eigen::Success || q.is_degenerate()) fail(ErrorCode::NotPsd, "Q not positive definite");
  return llt.matrixL();
}

/// One draw with overlap exactly L L^T: Haar-distributed orthonormal frame
/// (QR of a Gaussian matrix with the sign of diag(R) fixed).
inline SpinBlock sample_constrained_one(const Matrix& chol, std::size_t n_spins, Rng& rng) {
  const auto n = chol.rows();
  const auto big = static_cast<Eigen::Index>(n_spins);
  std::normal_distribution<double> gauss;
  Matrix g(big, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index i = 0; i < big; ++i) g(i, c) = gauss(rng);
  Matrix frame;
  if (n == 1) {
    frame = g / g.norm();
  } else {
    Eigen::HouseholderQR<Matrix> qr(g);
    frame = qr.householderQ() * Matrix::Identity(big, n);
    const Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < n; ++c)
      if (r(c, c) < 0.0) frame.col(c) *= -1.0;
  }
  return SpinBlock{std::sqrt(static_cast<double>(n_spins)) * chol * frame.transpose()};
}

/// Draws on {sigma : R(sigma, sigma) = Q}; these lie in every epsilon window
/// around Q, so epsilon is only checked for positivity.
inline std::vector<SpinBlock> sample_constrained(const ConstraintMatrix& q, std::size_t n_spins, double eps, std::size_t count,
                                                 std::uint64_t seed) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (n_spins < 4 * q.dim()) fail(ErrorCode::InvalidArgument, "need N >= 4n");
  const Matrix chol = constraint_cholesky(q);
  Rng rng(seed);
  std::vector<SpinBlock> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_constrained_one(chol, n_spins, rng));
  return out;
}

/// 1/2 log det Q, or -inf for degenerate Q.
inline double overlap_log_volume(const ConstraintMatrix& q) {
  if (q.is_degenerate()) return -std::numeric_limits<double>::infinity();
  return 0.5 * *linalg::logdet_spd(q.matrix());
}

/// (1/N) log of the probability that two independent uniform points on the
/// sphere of R^N have overlap in [q - eps, q + eps]; the overlap density is
/// c_N (1 - t^2)^{(N-3)/2}. Composite Simpson in the log domain.
inline double overlap_window_log_volume(double q, std::size_t n_spins, double eps, int intervals = 4000) {
  if (n_spins < 4) fail(ErrorCode::InvalidArgument, "need N >= 4");
  if (!(eps > 0.0) || !(std::abs(q) < 1.0)) fail(ErrorCode::InvalidArgument, "need eps > 0 and |q| < 1");
  if (intervals % 2) ++intervals;
  const double nn = static_cast<double>(n_spins);
  const double lo = std::max(-1.0, q - eps);
  const double hi = std::min(1.0, q + eps);
  const double log_c = std::lgamma(0.5 * nn) - std::lgamma(0.5 * (nn - 1.0)) - 0.5 * std::log(std::numbers::pi);
  auto log_density = [&](double t) {
    const double u = 1.0 - t * t;
    return u > 0.0 ? 0.5 * (nn - 3.0) * std::log(u) : -std::numeric_limits<double>::infinity();
  };
  const double step = (hi - lo) / intervals;
  std::vector<double> logs(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) logs[static_cast<std::size_t>(i)] = log_density(lo + step * i);
  const double m = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * std::exp(logs[static_cast<std::size_t>(i)] - m);
  }
  return (log_c + m + std::log(s * step / 3.0)) / nn;
}

struct EstimatorResult {
  double value = 0.0;
  double std_error = 0.0;
  double log_volume = 0.0;
  std::size_t n_spins = 0;
  std::size_t copies = 0;
  double eps = 0.0;
  std::size_t disorder_reps = 0;
  std::size_t config_samples = 0;
  std::uint64_t seed = 0;
};

/// value = 1/2 log det Q + (1/N) mean_d log mean_s exp(H_d(sigma_s) + field(sigma_s)).
/// Simple-mean estimator: biased low at finite budgets.
inline EstimatorResult estimate_free_energy(const ConstraintMatrix& q, std::size_t n_spins, double eps, const MixtureSpec& spec,
                                            const ExternalField& h, std::size_t disorder_reps, std::size_t config_samples,
                                            std::uint64_t seed, unsigned workers = 1) {
  if (spec.dim() != q.dim() || h.dim() != q.dim()) fail(ErrorCode::DimensionMismatch, "model dimensions differ");
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (n_spins > kMaxSpins) fail(ErrorCode::BudgetExceeded, "N must be at most 64");
  if (n_spins < 4 * q.dim()) fail(ErrorCode::InvalidArgument, "need N >= 4n");
  if (spec.max_degree() > kMaxTensorDegree) fail(ErrorCode::BudgetExceeded, "tensor degree above 4 is not supported");
  if (disorder_reps == 0 || config_samples == 0) fail(ErrorCode::BudgetExceeded, "sample budgets must be positive");
  const Matrix chol = constraint_cholesky(q);

  std::vector<double> per_rep(disorder_reps);
  parallel_for(disorder_reps, workers, [&](std::size_t d) {
    const auto disorder = generate_disorder(spec, n_spins, stream_seed(seed, d, 0));
    Rng rng(stream_seed(seed, d, 1));
    std::vector<double> energy(config_samples);
    for (auto& e : energy) {
      const SpinBlock s = sample_constrained_one(chol, n_spins, rng);
      e = hamiltonian(s, disorder, spec) + field_energy(s, h);
    }
    per_rep[d] = log_mean_exp(energy) / static_cast<double>(n_spins);
  });

  EstimatorResult out;
  out.log_volume = overlap_log_volume(q);
  out.n_spins = n_spins;
  out.copies = q.dim();
  out.eps = eps;
  out.disorder_reps = disorder_reps;
  out.config_samples = config_samples;
  out.seed = seed;
  double mean = 0.0;
  for (double v : per_rep) mean += v;
  mean /= static_cast<double>(disorder_reps);
  double ss = 0.0;
  for (double v : per_rep) ss += (v - mean) * (v - mean);
  out.value = out.log_volume + mean;
  out.std_error = disorder_reps > 1 ? std::sqrt(ss / static_cast<double>(disorder_reps - 1) / static_cast<double>(disorder_reps)) : 0.0;
  return out;
}

struct DoublingAudit {
  EstimatorResult base;
  EstimatorResult doubled;
  double difference = 0.0;
  double allowance = 0.0;
  bool stable = false;
};

/// Re-runs with both budgets doubled; stable when the shift is within
/// 3 combined standard errors plus `slack`.
inline DoublingAudit doubling_audit(const ConstraintMatrix& q, std::size_t n_spins, double eps, const MixtureSpec& spec,
                                    const ExternalField& h, std::size_t disorder_reps, std::size_t config_samples,
                                    std::uint64_t seed, unsigned workers = 1, double slack = 0.005) {
  DoublingAudit a;
  a.base = estimate_free_energy(q, n_spins, eps, spec, h, disorder_reps, config_samples, seed, workers);
  a.doubled = estimate_free_energy(q, n_spins, eps, spec, h, 2 * disorder_reps, 2 * config_samples, mix64(seed), workers);
  a.difference = std::abs(a.doubled.value - a.base.value);
  a.allowance = 3.0 * std::hypot(a.base.std_error, a.doubled.std_error) + slack;
  a.stable = a.difference <= a.allowance;
  return a;
}

}  // namespace spinglass
