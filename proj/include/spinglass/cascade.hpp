#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "spinglass/error.hpp"
#include "spinglass/functional.hpp"
#include "spinglass/geometry.hpp"
#include "spinglass/linalg.hpp"
#include "spinglass/mixture.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

/// Inputs of the Gaussian recursion: z_k ~ N(0, Delta_k) independent.
struct CascadeSpec {
  DiscretePath path;
  MixtureSpec spec;
  Multiplier lambda;
  ExternalField h;
  std::vector<SymMatrix> increment_covariances;

  CascadeSpec(DiscretePath p, MixtureSpec s, Multiplier l, ExternalField field)
      : path(std::move(p)), spec(std::move(s)), lambda(std::move(l)), h(std::move(field)) {
    if (spec.dim() != path.dim() || lambda.dim() != path.dim() || h.dim() != path.dim())
      fail(ErrorCode::DimensionMismatch, "cascade inputs have inconsistent dimensions");
    increment_covariances = delta_increments(spec, path);
  }
};

struct NestedMCResult {
  double estimate = 0.0;
  double std_error = 0.0;
  std::vector<std::size_t> samples_per_level;
  std::uint64_t seed = 0;
};

/// log((1/M) sum_i exp(v_i)) with a max shift.
inline double log_mean_exp(std::span<const double> v) {
  if (v.empty()) fail(ErrorCode::InvalidArgument, "log_mean_exp of an empty sample");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

/// log sum_a exp(log_w_a + scale * y_a) with a max shift.
inline double weighted_log_sum_exp(std::span<const double> log_w, std::span<const double> y, double scale = 1.0) {
  if (log_w.size() != y.size() || log_w.empty()) fail(ErrorCode::DimensionMismatch, "weights and values differ in length");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y.size(); ++i) m = std::max(m, log_w[i] + scale * y[i]);
  if (!std::isfinite(m)) fail(ErrorCode::InvalidArgument, "log-sum-exp has no finite term");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::exp(log_w[i] + scale * y[i] - m);
  return m + std::log(s);
}

namespace detail {

/// (1/x) log mean exp(L_s / 1) for L_s = x * Y_s, with the delta-method
/// standard error of the outer average.
struct LogMeanEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

inline LogMeanEstimate log_mean_with_error(std::span<const double> scaled, double x) {
  const double m = *std::max_element(scaled.begin(), scaled.end());
  const auto count = static_cast<double>(scaled.size());
  double mean = 0.0;
  for (double v : scaled) mean += std::exp(v - m);
  mean /= count;
  double var = 0.0;
  for (double v : scaled) {
    const double d = std::exp(v - m) - mean;
    var += d * d;
  }
  var = scaled.size() > 1 ? var / (count - 1.0) : 0.0;
  LogMeanEstimate out;
  out.estimate = (m + std::log(mean)) / x;
  out.std_error = std::sqrt(var / count) / (mean * x);
  return out;
}

inline constexpr std::size_t kChunk = 256;

}  // namespace detail

/// Nested Monte Carlo evaluation of Y_0: the leaf Y_r is the closed-form
/// Gaussian integral -1/2 log|Lambda| + 1/2 (Lambda^{-1} y, y) with
/// y = h + sum_k z_k, and each level applies Y_k = (1/x_k) log E exp(x_k Y_{k+1})
/// with fresh inner samples for every outer sample. samples[k] is the number
/// of draws of z_{k+1}.
inline NestedMCResult nested_recursion_mc(const CascadeSpec& cs, std::span<const std::size_t> samples, std::uint64_t seed,
                                          unsigned workers = 1) {
  const int r = cs.path.levels();
  const auto n = static_cast<Eigen::Index>(cs.path.dim());
  if (r > 3) fail(ErrorCode::InvalidArgument, "nested recursion supports r <= 3");
  if (n > 3) fail(ErrorCode::InvalidArgument, "nested recursion supports n <= 3");
  if (static_cast<int>(samples.size()) != r) fail(ErrorCode::InvalidArgument, "need one sample count per level");
  double total = 1.0;
  for (auto s : samples) {
    if (s == 0) fail(ErrorCode::BudgetExceeded, "sample budget must be positive at every level");
    total *= static_cast<double>(s);
  }
  if (total > 1e9) fail(ErrorCode::BudgetExceeded, "nested sample budget exceeds 1e9 leaf evaluations");

  const SymMatrix& lambda = cs.lambda.matrix();
  Eigen::LLT<Matrix> llt(lambda);
  const double half_logdet = 0.5 * *linalg::logdet_spd(lambda);
  auto leaf = [&](const Vector& y) { return -half_logdet + 0.5 * y.dot(llt.solve(y)); };

  std::vector<Matrix> factor;
  std::vector<bool> random;
  for (const auto& d : cs.increment_covariances) {
    factor.push_back(linalg::psd_factor(d));
    random.push_back(d.cwiseAbs().maxCoeff() != 0.0);
  }

  NestedMCResult out;
  out.samples_per_level.assign(samples.begin(), samples.end());
  out.seed = seed;
  if (std::none_of(random.begin(), random.end(), [](bool b) { return b; })) {
    out.estimate = leaf(cs.h.h);
    out.std_error = 0.0;
    return out;
  }

  // Y_k(y) for k >= 1; recursion over the remaining levels.
  auto level = [&](auto&& self, int k, const Vector& y, Rng& rng) -> double {
    if (k == r) return leaf(y);
    if (!random[static_cast<std::size_t>(k)]) return self(self, k + 1, y, rng);
    std::normal_distribution<double> gauss;
    const double x = cs.path.x(k);
    std::vector<double> vals(samples[static_cast<std::size_t>(k)]);
    Vector g(n);
    for (auto& v : vals) {
      for (Eigen::Index i = 0; i < n; ++i) g(i) = gauss(rng);
      v = x * self(self, k + 1, y + factor[static_cast<std::size_t>(k)] * g, rng);
    }
    return log_mean_exp(vals) / x;
  };

  const std::size_t outer = samples[0];
  const double x0 = cs.path.x(0);
  std::vector<double> scaled(outer);
  const std::size_t chunks = (outer + detail::kChunk - 1) / detail::kChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    Rng rng(stream_seed(seed, c));
    std::normal_distribution<double> gauss;
    Vector g(n);
    const std::size_t end = std::min(outer, (c + 1) * detail::kChunk);
    for (std::size_t s = c * detail::kChunk; s < end; ++s) {
      Vector y = cs.h.h;
      if (random[0]) {
        for (Eigen::Index i = 0; i < n; ++i) g(i) = gauss(rng);
        y += factor[0] * g;
      }
      scaled[s] = x0 * level(level, 1, y, rng);
    }
  });
  const auto est = detail::log_mean_with_error(scaled, x0);
  out.estimate = est.estimate;
  out.std_error = est.std_error;
  return out;
}

struct GaussianMCResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of (1/x) log E exp((x/2)(A^{-1}(y+g), y+g)), g ~ N(0, C).
inline GaussianMCResult gaussian_identity_mc(const SymMatrix& a, const SymMatrix& c, double x, const Vector& y,
                                             std::size_t samples, std::uint64_t seed, unsigned workers = 1) {
  const auto n = a.rows();
  linalg::require_square(c, n, "C");
  if (samples < 2) fail(ErrorCode::BudgetExceeded, "need at least two samples");
  if (!(x > 0.0 && x <= 1.0)) fail(ErrorCode::InvalidArgument, "x must lie in (0, 1]");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorCode::InvalidArgument, "A must be positive definite");
  const Matrix f = linalg::psd_factor(c);
  std::vector<double> scaled(samples);
  const std::size_t chunks = (samples + detail::kChunk - 1) / detail::kChunk;
  parallel_for(chunks, workers, [&](std::size_t ch) {
    Rng rng(stream_seed(seed, ch));
    std::normal_distribution<double> gauss;
    Vector z(n);
    const std::size_t end = std::min(samples, (ch + 1) * detail::kChunk);
    for (std::size_t s = ch * detail::kChunk; s < end; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) z(i) = gauss(rng);
      const Vector v = y + f * z;
      scaled[s] = 0.5 * x * v.dot(llt.solve(v));
    }
  });
  const auto est = detail::log_mean_with_error(scaled, x);
  return {est.estimate, est.std_error};
}

/// Level variances v_k = Sum(theta(Q_{k+1}) - theta(Q_k)) of the tree-indexed
/// Gaussian process with Cov(Y(a), Y(b)) = Sum theta(Q_{a ^ b}).
inline std::vector<double> theta_level_variances(const DiscretePath& path, const MixtureSpec& spec) {
  if (path.dim() != spec.dim()) fail(ErrorCode::DimensionMismatch, "path and mixture dimensions differ");
  require_valid(path);
  std::vector<double> v;
  SymMatrix prev = theta_matrix(spec, path.q(0));
  for (int k = 1; k <= path.levels(); ++k) {
    SymMatrix cur = theta_matrix(spec, path.q(k));
    v.push_back(linalg::sum_entries(cur - prev));
    prev = std::move(cur);
  }
  return v;
}

/// Large-N value of (1/N) E log sum_a v_a exp(sqrt(N) Y(a)) for the cascade
/// process, computed level by level from the leaves: each level is a
/// log-Gaussian moment, (1/x) log E exp(x sqrt(v) g) = x v / 2 per unit N.
inline double theta_cascade_value(const DiscretePath& path, const MixtureSpec& spec) {
  const auto v = theta_level_variances(path, spec);
  double y = 0.0;
  for (int k = path.levels() - 1; k >= 0; --k) y = 0.5 * path.x(k) * v[static_cast<std::size_t>(k)] + y;
  return y;
}

/// Truncated Ruelle cascade: K atoms per node, depth r; leaves indexed in
/// base K with the first level as the most significant digit.
struct FiniteCascade {
  int depth = 0;
  std::size_t branching = 0;
  std::vector<double> xs;           // x_0..x_{r-1}
  std::vector<double> log_weights;  // normalised: logsumexp == 0
  std::vector<double> weights;

  std::size_t leaves() const { return log_weights.size(); }

  /// Depth of the common ancestor of leaves a and b (r when a == b).
  int tree_overlap(std::size_t a, std::size_t b) const {
    std::size_t stride = leaves();
    for (int k = 0; k < depth; ++k) {
      stride /= branching;
      if (a / stride != b / stride) return k;
      a %= stride;
      b %= stride;
    }
    return depth;
  }
};

inline constexpr std::size_t kMaxCascadeLeaves = std::size_t{1} << 24;

inline std::size_t cascade_leaves(int depth, std::size_t k) {
  std::size_t leaves = 1;
  for (int i = 0; i < depth; ++i) {
    if (leaves > kMaxCascadeLeaves / k) fail(ErrorCode::BudgetExceeded, "cascade has too many leaves");
    leaves *= k;
  }
  return leaves;
}

/// At depth k every node gets the K largest points of a Poisson process with
/// intensity x t^{-x-1}, i.e. Gamma_i^{-1/x} for unit-rate arrival times
/// Gamma_i; leaf weights are the normalised products along the branch.
inline FiniteCascade sample_finite_cascade(const DiscretePath& path, std::size_t k, std::uint64_t seed) {
  require_valid(path);
  if (k < 100) fail(ErrorCode::InvalidArgument, "K must be at least 100 atoms per node");
  FiniteCascade fc;
  fc.depth = path.levels();
  fc.branching = k;
  for (int i = 0; i < fc.depth; ++i) fc.xs.push_back(path.x(i));
  const std::size_t leaves = cascade_leaves(fc.depth, k);

  std::vector<double> logw{0.0};
  for (int level = 0; level < fc.depth; ++level) {
    const double x = fc.xs[static_cast<std::size_t>(level)];
    std::vector<double> next(logw.size() * k);
    for (std::size_t parent = 0; parent < logw.size(); ++parent) {
      Rng rng(stream_seed(seed, static_cast<std::uint64_t>(level), parent));
      std::exponential_distribution<double> expo(1.0);
      double gamma = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        gamma += expo(rng);
        next[parent * k + i] = logw[parent] - std::log(gamma) / x;
      }
    }
    logw = std::move(next);
  }
  const std::vector<double> zeros(leaves, 0.0);
  const double norm = weighted_log_sum_exp(logw, zeros);
  if (!std::isfinite(norm)) fail(ErrorCode::InvalidArgument, "cascade weights cannot be normalised");
  fc.log_weights.resize(leaves);
  fc.weights.resize(leaves);
  for (std::size_t i = 0; i < leaves; ++i) {
    fc.log_weights[i] = logw[i] - norm;
    fc.weights[i] = std::exp(fc.log_weights[i]);
  }
  return fc;
}

/// Finite-size estimate of (1/M) E log sum_a v_a exp(sqrt(M) Y(a)), averaged
/// over `reps` independent cascades and Gaussian fields.
inline NestedMCResult cascade_free_energy_mc(const CascadeSpec& cs, std::size_t k, double m_effective, std::size_t reps,
                                             std::uint64_t seed, unsigned workers = 1) {
  const int r = cs.path.levels();
  if (r > 2) fail(ErrorCode::InvalidArgument, "finite cascade estimator supports r <= 2");
  if (!(m_effective >= 1.0 && m_effective <= 64.0)) fail(ErrorCode::InvalidArgument, "M must lie in [1, 64]");
  if (reps < 100) fail(ErrorCode::InvalidArgument, "need at least 100 replicates");
  const auto var = theta_level_variances(cs.path, cs.spec);
  std::vector<double> sd;
  for (double v : var) sd.push_back(std::sqrt(std::max(v, 0.0)));
  const double scale = std::sqrt(m_effective);

  std::vector<double> per_rep(reps);
  parallel_for(reps, workers, [&](std::size_t rep) {
    const auto fc = sample_finite_cascade(cs.path, k, stream_seed(seed, rep, 0));
    Rng rng(stream_seed(seed, rep, 1));
    std::normal_distribution<double> gauss;
    std::vector<double> y{0.0};
    for (int level = 0; level < r; ++level) {
      std::vector<double> next(y.size() * k);
      for (std::size_t node = 0; node < y.size(); ++node)
        for (std::size_t i = 0; i < k; ++i) next[node * k + i] = y[node] + sd[static_cast<std::size_t>(level)] * gauss(rng);
      y = std::move(next);
    }
    per_rep[rep] = weighted_log_sum_exp(fc.log_weights, y, scale) / m_effective;
  });

  NestedMCResult out;
  out.seed = seed;
  out.samples_per_level = {reps, k};
  double mean = 0.0;
  for (double v : per_rep) mean += v;
  mean /= static_cast<double>(reps);
  double ss = 0.0;
  for (double v : per_rep) ss += (v - mean) * (v - mean);
  out.estimate = mean;
  out.std_error = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
  return out;
}

}  // namespace spinglass
