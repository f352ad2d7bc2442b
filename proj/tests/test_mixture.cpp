#include <gtest/gtest.h>

#include <random>

#include "spinglass/spinglass.hpp"
#include "test_support.hpp"

using namespace spinglass;

namespace {

SymMatrix mat2(double a, double b, double d) {
  SymMatrix m(2, 2);
  m << a, b, b, d;
  return m;
}

DiscretePath scalar_path(std::vector<double> xs, std::vector<double> qs) {
  std::vector<SymMatrix> levels;
  for (double q : qs) levels.push_back(SymMatrix::Constant(1, 1, q));
  return DiscretePath(std::move(xs), std::move(levels));
}

}  // namespace

TEST(Mixture, XiScalarExamples) {
  const auto two = MixtureSpec::uniform(2, {{2, 1.0}});
  EXPECT_DOUBLE_EQ(xi_scalar(two, 0, 1, 0.5), 0.25);
  const auto mixed = MixtureSpec::uniform(1, {{2, 0.3}, {4, 0.1}});
  EXPECT_EQ(xi_scalar(mixed, 0, 0, 0.0), 0.0);
  EXPECT_NEAR(xi_scalar(mixed, 0, 0, 1.0), 0.10, 1e-15);
}

TEST(Mixture, RejectsBadSpecs) {
  EXPECT_THROW(MixtureSpec(1, {{3, Vector::Ones(1)}}), Error);
  EXPECT_THROW(MixtureSpec(1, {{0, Vector::Ones(1)}}), Error);
  EXPECT_THROW(MixtureSpec(1, {{66, Vector::Ones(1)}}), Error);
  EXPECT_THROW(MixtureSpec(2, {{2, Vector::Ones(1)}}), Error);
  EXPECT_THROW(MixtureSpec(0, {}), Error);
  EXPECT_NO_THROW(MixtureSpec(1, {{64, Vector::Constant(1, 8.0)}}));
}

TEST(Mixture, IndexOutOfRange) {
  const auto spec = MixtureSpec::uniform(2, {{2, 1.0}});
  try {
    xi_scalar(spec, 2, 0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(Mixture, XiMatrixExamples) {
  const SymMatrix a = mat2(1, 0.5, 1);
  EXPECT_TRUE(xi_matrix(MixtureSpec::uniform(2, {{2, 1.0}}), a).isApprox(mat2(1, 0.25, 1)));
  EXPECT_EQ(xi_matrix(MixtureSpec::zero(2), a), SymMatrix::Zero(2, 2));
  Vector b(2);
  b << 1, 2;
  const MixtureSpec spec(2, {{2, b}});
  EXPECT_TRUE(xi_matrix(spec, a).isApprox(mat2(1, 0.5, 4)));
  EXPECT_THROW(xi_matrix(spec, SymMatrix::Identity(3, 3)), Error);
}

TEST(Mixture, XiPrimeExamples) {
  EXPECT_DOUBLE_EQ(xi_prime_matrix(MixtureSpec::uniform(2, {{2, 1.0}}), mat2(1, 0.5, 1))(0, 1), 1.0);
  const auto mixed = MixtureSpec::uniform(2, {{2, 0.3}, {4, 0.1}});
  EXPECT_EQ(xi_prime_matrix(mixed, SymMatrix::Zero(2, 2)), SymMatrix::Zero(2, 2));
  const auto one = MixtureSpec::uniform(1, {{2, 0.3}, {4, 0.1}});
  EXPECT_NEAR(xi_prime_scalar(one, 0, 0, 1.0), 0.22, 1e-15);
  const double fd = (xi_scalar(one, 0, 0, 1.0 + 1e-6) - xi_scalar(one, 0, 0, 1.0 - 1e-6)) / 2e-6;
  EXPECT_NEAR(xi_prime_scalar(one, 0, 0, 1.0), fd, 1e-8);
}

TEST(Mixture, ThetaExamples) {
  const SymMatrix half = SymMatrix::Constant(1, 1, 0.5);
  EXPECT_DOUBLE_EQ(theta_matrix(MixtureSpec::uniform(1, {{2, 1.0}}), half)(0, 0), 0.25);
  EXPECT_EQ(theta_matrix(MixtureSpec::uniform(2, {{2, 1.0}}), SymMatrix::Zero(2, 2)), SymMatrix::Zero(2, 2));
  // pure 4-spin: theta = 3 beta^2 x^4
  EXPECT_DOUBLE_EQ(theta_matrix(MixtureSpec::uniform(1, {{4, 1.0}}), half)(0, 0), 3.0 * std::pow(0.5, 4));
  EXPECT_DOUBLE_EQ(theta_matrix(MixtureSpec::uniform(1, {{4, 1.0}}), half)(0, 0), 0.1875);
}

TEST(Mixture, DeltaExamples) {
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  const auto d = delta_increments(spec, scalar_path({0.0, 0.5, 1.0}, {0.0, 1.0}));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0](0, 0), 2.0);

  const auto dup = delta_increments(spec, scalar_path({0.0, 0.3, 0.6, 1.0}, {0.0, 0.5, 0.5}));
  EXPECT_EQ(dup[1](0, 0), 0.0);

  const SymMatrix q1 = mat2(0.4, 0.2, 0.4);
  const SymMatrix q2 = mat2(1.0, 0.5, 1.0);
  const DiscretePath path({0.0, 0.3, 0.7, 1.0}, {SymMatrix::Zero(2, 2), q1, q2});
  const auto d2 = delta_increments(MixtureSpec::uniform(2, {{2, 1.0}}), path);
  EXPECT_TRUE(d2[1].isApprox(2.0 * (q2 - q1), 1e-14));
  Eigen::SelfAdjointEigenSolver<Matrix> es(d2[1]);
  EXPECT_NEAR(es.eigenvalues()(0), 2.0 * (0.6 - 0.3), 1e-12);
  EXPECT_NEAR(es.eigenvalues()(1), 2.0 * (0.6 + 0.3), 1e-12);
}

TEST(Mixture, DeltaRejectsNonMonotonePath) {
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  try {
    delta_increments(spec, scalar_path({0.0, 0.3, 0.6, 1.0}, {0.0, 0.8, 0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(MixtureProperty, MatrixMatchesScalarEntrywise) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4;
    const auto spec = instances::mixture(static_cast<std::size_t>(n), rng);
    SymMatrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) a(i, j) = a(j, i) = u(rng);
    const SymMatrix x = xi_matrix(spec, a);
    const SymMatrix xp = xi_prime_matrix(spec, a);
    const SymMatrix th = theta_matrix(spec, a);
    EXPECT_TRUE(linalg::is_exactly_symmetric(x));
    EXPECT_TRUE(linalg::is_exactly_symmetric(xp));
    EXPECT_TRUE(linalg::is_exactly_symmetric(th));
    EXPECT_TRUE(x.isApprox(oracle::apply(spec.terms(), a, false), 1e-13) || x.norm() < 1e-14);
    EXPECT_TRUE(xp.isApprox(oracle::apply(spec.terms(), a, true), 1e-13) || xp.norm() < 1e-14);
    EXPECT_LE((th - oracle::theta(spec.terms(), a)).cwiseAbs().maxCoeff(), 1e-14);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) EXPECT_DOUBLE_EQ(x(i, j), xi_scalar(spec, static_cast<std::size_t>(i), static_cast<std::size_t>(j), a(i, j)));
  }
}

TEST(MixtureProperty, DerivativeAndConvexity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = instances::mixture(2, rng);
    const double x = u(rng);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t j2 = 0; j2 < 2; ++j2) {
        const double fd = (xi_scalar(spec, j, j2, x + h) - xi_scalar(spec, j, j2, x - h)) / (2 * h);
        EXPECT_LE(std::abs(xi_prime_scalar(spec, j, j2, x) - fd), 50.0 * h * h);
      }
    for (std::size_t j = 0; j < 2; ++j) {
      const double second = xi_scalar(spec, j, j, x + 1e-3) - 2 * xi_scalar(spec, j, j, x) + xi_scalar(spec, j, j, x - 1e-3);
      EXPECT_GE(second, -1e-15);
    }
  }
}

TEST(MixtureProperty, SchurIncrementsArePsd) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 4;
    const auto q = instances::constraint(n, rng);
    const auto path = instances::path(q, 1 + trial % 3, rng);
    const auto spec = instances::mixture(static_cast<std::size_t>(n), rng);
    for (const auto& d : delta_increments(spec, path)) EXPECT_GE(linalg::min_eigenvalue(d), -1e-10);
  }
}
