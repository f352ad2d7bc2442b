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

DiscretePath step(double jump) {
  return DiscretePath({0.0, jump, 1.0}, {SymMatrix::Zero(1, 1), SymMatrix::Ones(1, 1)});
}

bool has(const ValidationReport& r, const std::string& inv, int index) {
  for (const auto& v : r.violations)
    if (v.invariant == inv && v.index == index) return true;
  return false;
}

}  // namespace

TEST(Constraint, Validation) {
  EXPECT_NO_THROW(ConstraintMatrix(mat2(1, 0.5, 1)));
  try {
    ConstraintMatrix(mat2(0.9, 0.5, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "constraint diagonal must equal 1");
  }
  EXPECT_THROW(ConstraintMatrix(mat2(1, 1.5, 1)), Error);
  SymMatrix asym = mat2(1, 0.5, 1);
  asym(0, 1) = 0.4;
  EXPECT_THROW(ConstraintMatrix{asym}, Error);
  SymMatrix not_psd(3, 3);
  not_psd << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  try {
    ConstraintMatrix{not_psd};
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPsd);
  }
  EXPECT_TRUE(ConstraintMatrix(mat2(1, 1, 1)).is_degenerate());
  EXPECT_FALSE(ConstraintMatrix(mat2(1, 0.5, 1)).is_degenerate());
}

TEST(Path, ValidateExamples) {
  const ConstraintMatrix q(mat2(1, 0.5, 1));
  const DiscretePath ok({0.0, 0.5, 1.0}, {SymMatrix::Zero(2, 2), q.matrix()});
  EXPECT_TRUE(validate_path(ok, q).ok());

  const DiscretePath bad_x({0.0, 0.7, 0.3, 1.0}, {SymMatrix::Zero(2, 2), 0.5 * q.matrix(), q.matrix()});
  const auto r1 = validate_path(bad_x, q);
  EXPECT_FALSE(r1.ok());
  EXPECT_TRUE(has(r1, "x_increasing", 1));

  const SymMatrix q1 = mat2(0.9, 0.0, 0.2);
  const DiscretePath bad_q({0.0, 0.3, 0.6, 1.0}, {SymMatrix::Zero(2, 2), q1, q.matrix()});
  const auto r2 = validate_path(bad_q, q);
  ASSERT_TRUE(has(r2, "q_increment_psd", 2));
  Eigen::SelfAdjointEigenSolver<Matrix> es(q.matrix() - q1);
  for (const auto& v : r2.violations) {
    if (v.invariant == "q_increment_psd") {
      EXPECT_NEAR(v.magnitude, es.eigenvalues()(0), 1e-12);
    }
  }
}

TEST(Path, ValidateOtherInvariants) {
  const ConstraintMatrix q(SymMatrix::Identity(1, 1));
  EXPECT_TRUE(has(validate_path(DiscretePath({0.1, 0.5, 1.0}, {SymMatrix::Zero(1, 1), q.matrix()}), q), "x_start", -1));
  EXPECT_TRUE(has(validate_path(DiscretePath({0.0, 0.5, 0.9}, {SymMatrix::Zero(1, 1), q.matrix()}), q), "x_end", 1));
  EXPECT_TRUE(has(validate_path(DiscretePath({0.0, 0.5, 1.0}, {SymMatrix::Ones(1, 1), q.matrix()}), q), "q_start_zero", 0));
  EXPECT_TRUE(has(validate_path(DiscretePath({0.0, 0.5, 1.0}, {SymMatrix::Zero(1, 1), 0.5 * q.matrix()}), q), "q_end_target", 1));
  EXPECT_TRUE(has(validate_path(DiscretePath({0.0, 1e-10, 1.0}, {SymMatrix::Zero(1, 1), q.matrix()}), q), "x_increasing", 0));
  EXPECT_THROW(DiscretePath({0.0, 1.0}, {SymMatrix::Zero(1, 1)}), Error);
}

TEST(PathProperty, ValidationMatchesIncrements) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  for (int trial = 0; trial < 100; ++trial) {
    const double a = u(rng), b = u(rng);
    const DiscretePath p({0.0, 0.3, 0.6, 1.0},
                         {SymMatrix::Zero(1, 1), SymMatrix::Constant(1, 1, a), SymMatrix::Constant(1, 1, b)});
    bool delta_ok = true;
    try {
      delta_increments(spec, p);
    } catch (const Error&) {
      delta_ok = false;
    }
    EXPECT_EQ(validate_path(p).ok(), delta_ok) << a << " " << b;
  }
}

TEST(Path, DistanceExamples) {
  EXPECT_EQ(path_distance(step(0.5), step(0.5)), 0.0);
  EXPECT_NEAR(path_distance(step(0.5), step(0.75)), 0.25, 1e-15);
  EXPECT_THROW(path_distance(step(0.5), DiscretePath({0.0, 0.5, 1.0}, {SymMatrix::Zero(2, 2), SymMatrix::Identity(2, 2)})), Error);
}

TEST(Path, DistanceMatchesMonteCarloQuadrature) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const auto q = instances::constraint(2, rng);
    const auto a = instances::path(q, 3, rng);
    const auto b = instances::path(q, 2, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double s = 0.0;
    const int m = 100000;
    for (int i = 0; i < m; ++i) {
      const double t = u(rng);
      s += (a.at(t) - b.at(t)).cwiseAbs().sum();
    }
    EXPECT_NEAR(path_distance(a, b), s / m, 1e-2 * std::max(1.0, s / m));
    EXPECT_NEAR(path_distance(a, b), s / m, 5e-3);
  }
}

TEST(PathProperty, DistanceIsAMetric) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = instances::constraint(2, rng);
    const auto a = instances::path(q, 1 + trial % 3, rng);
    const auto b = instances::path(q, 1 + (trial + 1) % 3, rng);
    const auto c = instances::path(q, 1 + (trial + 2) % 3, rng);
    EXPECT_DOUBLE_EQ(path_distance(a, b), path_distance(b, a));
    EXPECT_LE(path_distance(a, c), path_distance(a, b) + path_distance(b, c) + 1e-12);
    EXPECT_EQ(path_distance(a, a), 0.0);
    EXPECT_GT(path_distance(a, b), 0.0);
  }
}

TEST(Path, RefineExamples) {
  std::mt19937_64 rng(24);
  const auto q = instances::constraint(2, rng);
  const auto p = instances::path(q, 2, rng);
  const double mid = 0.5 * (p.x(0) + p.x(1));
  const auto refined = refine_path(p, 1, mid);
  EXPECT_EQ(refined.levels(), 3);
  EXPECT_EQ(path_distance(p, refined), 0.0);
  EXPECT_TRUE(validate_path(refined, q).ok());
  EXPECT_THROW(refine_path(p, 1, p.x(1)), Error);
  EXPECT_THROW(refine_path(p, 1, p.x(0) - 0.01), Error);
}

TEST(PathProperty, RefinementPreservesStepFunction) {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = instances::constraint(1 + trial % 3, rng);
    const auto p = instances::path(q, 1 + trial % 3, rng);
    const int k = trial % (p.levels() + 1);
    const double x = p.x(k - 1) + u(rng) * (p.x(k) - p.x(k - 1));
    const auto refined = refine_path(p, k, x);
    EXPECT_EQ(path_distance(p, refined), 0.0);
    EXPECT_TRUE(validate_path(refined, q).ok());
  }
}

TEST(Path, ScalarProfileAndEvaluation) {
  const ConstraintMatrix q(mat2(1, 0.5, 1));
  const std::vector<double> xs{0.2, 0.6};
  const std::vector<double> qs{0.4};
  const auto p = scalar_profile_path(xs, qs, q);
  EXPECT_TRUE(validate_path(p, q).ok());
  EXPECT_EQ(p.at(0.0), SymMatrix::Zero(2, 2));
  EXPECT_EQ(p.at(0.2), SymMatrix::Zero(2, 2));  // left-continuous
  EXPECT_EQ(p.at(0.3), 0.4 * q.matrix());
  EXPECT_EQ(p.at(0.6), 0.4 * q.matrix());
  EXPECT_EQ(p.at(1.0), q.matrix());
}
