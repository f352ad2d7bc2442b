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

SymMatrix s1(double v) { return SymMatrix::Constant(1, 1, v); }

DiscretePath one_level(double x0) { return DiscretePath({0.0, x0, 1.0}, {s1(0.0), s1(1.0)}); }

struct Instance {
  ConstraintMatrix q;
  DiscretePath path;
  MixtureSpec spec;
  ExternalField h;
};

Instance random_instance(std::mt19937_64& rng, int n, int r) {
  auto q = instances::constraint(n, rng);
  auto path = instances::path(q, r, rng);
  auto spec = instances::mixture(static_cast<std::size_t>(n), rng);
  auto h = instances::field(static_cast<std::size_t>(n), rng);
  return {std::move(q), std::move(path), std::move(spec), std::move(h)};
}

}  // namespace

TEST(LambdaChain, Examples) {
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  const auto ch = lambda_chain(Multiplier(s1(3.0)), one_level(0.5), spec);
  EXPECT_DOUBLE_EQ(ch.lambdas[0](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(ch.lambdas[1](0, 0), 3.0);
  EXPECT_TRUE(ch.admissible());

  std::mt19937_64 rng(31);
  const auto q = instances::constraint(3, rng);
  const auto path = instances::path(q, 3, rng);
  const Multiplier lam(instances::spd(3, rng));
  const auto zero = lambda_chain(lam, path, MixtureSpec::zero(3));
  for (const auto& l : zero.lambdas) EXPECT_EQ(l, lam.matrix());
}

TEST(LambdaChain, ForwardReconstruction) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 2, 2);
    const ParisiObjective obj(inst.path, inst.q, inst.h, inst.spec);
    const Multiplier lam = instances::admissible_lambda(obj, rng);
    const auto ch = lambda_chain(lam, inst.path, inst.spec);
    const auto deltas = delta_increments(inst.spec, inst.path);
    SymMatrix forward = ch.lambdas[0];
    for (int k = 0; k < inst.path.levels(); ++k) forward += inst.path.x(k) * deltas[static_cast<std::size_t>(k)];
    EXPECT_LE((forward - lam.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(LambdaChain, MembershipIsData) {
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  const auto ch = lambda_chain(Multiplier(s1(0.9)), one_level(0.5), spec);
  EXPECT_FALSE(ch.admissible());
  EXPECT_LT(ch.min_eigenvalue0, 0.0);
}

TEST(Evaluate, ZeroMixtureClosedForm) {
  const ConstraintMatrix q(mat2(1, 0.5, 1));
  const Multiplier lam(linalg::mirrored(linalg::symmetrize(q.matrix().inverse())));
  const auto b = evaluate(lam, single_level_path(q), q, ExternalField::zero(2), MixtureSpec::zero(2));
  EXPECT_NEAR(b.total, 0.5 * std::log(0.75), 1e-12);
  EXPECT_NEAR(b.total, -0.143841, 1e-6);

  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto qr = instances::constraint(1 + trial % 4, rng);
    const auto path = instances::path(qr, 1 + trial % 3, rng);
    const Multiplier inv(linalg::mirrored(linalg::symmetrize(qr.matrix().inverse())));
    const auto br = evaluate(inv, path, qr, ExternalField::zero(qr.dim()), MixtureSpec::zero(qr.dim()));
    EXPECT_NEAR(br.total, 0.5 * std::log(qr.matrix().determinant()), 1e-12);
  }
}

TEST(Evaluate, HighTemperatureScalar) {
  const double beta = 0.3, x0 = 0.999;
  const double lam = 1.0 + 2.0 * beta * beta;
  const ConstraintMatrix q(s1(1.0));
  const auto spec = MixtureSpec::uniform(1, {{2, beta}});
  const auto b = evaluate(Multiplier(s1(lam)), one_level(x0), q, ExternalField::zero(1), spec);
  const double delta = 2.0 * beta * beta;
  const double by_hand =
      0.5 * (lam - 1.0 - std::log(lam) + std::log(lam / (lam - x0 * delta)) / x0) - 0.5 * x0 * beta * beta;
  EXPECT_NEAR(b.total, by_hand, 1e-14);
  EXPECT_NEAR(b.total, 0.045, 1e-4);
  EXPECT_NEAR(b.total, oracle::functional(s1(lam), one_level(x0), s1(1.0), Vector::Zero(1), spec.terms()), 1e-13);
}

TEST(Evaluate, NotInLAndInvalidPath) {
  const auto spec = MixtureSpec::uniform(1, {{2, 1.0}});
  try {
    evaluate(Multiplier(s1(0.9)), one_level(0.5), ConstraintMatrix(s1(1.0)), ExternalField::zero(1), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotInL);
  }
  const DiscretePath bad({0.0, 0.5, 1.0}, {s1(0.0), s1(0.5)});
  try {
    evaluate(Multiplier(s1(3.0)), bad, ConstraintMatrix(s1(1.0)), ExternalField::zero(1), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPath);
  }
}

TEST(EvaluateProperty, MatchesNaiveOracleAndBreakdown) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 4, 1 + trial % 3);
    const ParisiObjective obj(inst.path, inst.q, inst.h, inst.spec);
    const Multiplier lam = instances::admissible_lambda(obj, rng);
    const auto b = evaluate(lam, inst.path, inst.q, inst.h, inst.spec);
    const double sum = b.trace_term + b.const_term + b.logdet_term + b.field_term + b.cascade_term - b.theta_term;
    EXPECT_LE(std::abs(b.total - sum), 1e-12 * std::max(1.0, std::abs(b.total)));
    EXPECT_NEAR(b.total, oracle::functional(lam.matrix(), inst.path, inst.q.matrix(), inst.h.h, inst.spec.terms()), 1e-10);
    EXPECT_DOUBLE_EQ(closed_form_Y0(lam, inst.path, inst.h, inst.spec), b.logdet_term + b.field_term + b.cascade_term);
  }
}

TEST(EvaluateProperty, RefinementInvariance) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 4, 1 + trial % 3);
    const ParisiObjective obj(inst.path, inst.q, inst.h, inst.spec);
    const Multiplier lam = instances::admissible_lambda(obj, rng);
    const int k = trial % (inst.path.levels() + 1);
    const double x = inst.path.x(k - 1) + u(rng) * (inst.path.x(k) - inst.path.x(k - 1));
    const auto refined = refine_path(inst.path, k, x);
    const double a = evaluate(lam, inst.path, inst.q, inst.h, inst.spec).total;
    const double b = evaluate(lam, refined, inst.q, inst.h, inst.spec).total;
    EXPECT_LE(std::abs(a - b), 1e-12);
  }
}

TEST(EvaluateProperty, ConvexInLambda) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 3, 1 + trial % 3);
    const ParisiObjective obj(inst.path, inst.q, inst.h, inst.spec);
    const SymMatrix a = instances::admissible_lambda(obj, rng, 0.05, 3.0).matrix();
    const SymMatrix b = instances::admissible_lambda(obj, rng, 0.05, 3.0).matrix();
    const double mid = *obj.value(0.5 * (a + b));
    EXPECT_LE(mid, 0.5 * (*obj.value(a) + *obj.value(b)) + 1e-10);
  }
}

TEST(Jacobi, Examples) {
  EXPECT_DOUBLE_EQ(jacobi_limit_term(s1(2.0), s1(1.0)), 0.25);
  EXPECT_EQ(jacobi_limit_term(SymMatrix::Identity(2, 2), SymMatrix::Zero(2, 2)), 0.0);
  EXPECT_THROW(jacobi_limit_term(SymMatrix::Zero(2, 2), SymMatrix::Zero(2, 2)), Error);
  EXPECT_EQ(log_ratio_term(SymMatrix::Identity(2, 2), SymMatrix::Zero(2, 2), 0.3), 0.0);
}

TEST(JacobiProperty, SmallXLimit) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4;
    const SymMatrix l1 = instances::spd(n, rng);
    const SymMatrix d1 = instances::spd(n, rng, 0.0, 1.0);
    EXPECT_LE(std::abs(log_ratio_term(l1, d1, 1e-6) - jacobi_limit_term(l1, d1)), 1e-4);
    // independent oracle: raw determinants
    const double naive = std::log(l1.determinant() / (l1 - 0.3 * d1).determinant()) / 0.6;
    EXPECT_NEAR(log_ratio_term(l1, d1, 0.3), naive, 1e-12);
  }
}

TEST(GaussianIdentity, Examples) {
  const auto s = gaussian_quadratic_identity(s1(2.0), s1(1.0), 0.5, Vector::Zero(1));
  EXPECT_NEAR(s.lhs, std::log(4.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.rhs, std::log(4.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.rhs, 0.287682, 1e-6);

  const auto mc = gaussian_identity_mc(s1(2.0), s1(1.0), 0.5, Vector::Zero(1), 1000000, 7);
  EXPECT_LE(std::abs(mc.estimate - s.rhs), 3.0 * mc.std_error);

  std::mt19937_64 rng(38);
  const SymMatrix a = instances::spd(3, rng);
  const Vector y = instances::gaussian_matrix(3, 1, rng);
  const auto det = gaussian_quadratic_identity(a, SymMatrix::Zero(3, 3), 0.7, y);
  const double quad = 0.5 * y.dot(a.inverse() * y);
  EXPECT_NEAR(det.lhs, quad, 1e-13);
  EXPECT_NEAR(det.rhs, quad, 1e-13);

  const SymMatrix c = instances::spd(3, rng, 0.0, 0.3);
  const auto y0 = gaussian_quadratic_identity(a, c, 0.4, Vector::Zero(3));
  EXPECT_NEAR(y0.rhs, std::log(a.determinant() / (a - 0.4 * c).determinant()) / 0.8, 1e-13);
}

TEST(GaussianIdentity, Divergent) {
  try {
    gaussian_quadratic_identity(s1(1.0), s1(3.0), 0.5, Vector::Zero(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Divergent);
  }
}

TEST(GaussianIdentityProperty, SidesAgree) {
  std::mt19937_64 rng(39);
  std::uniform_real_distribution<double> ux(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    const SymMatrix a = instances::spd(n, rng);
    const SymMatrix c = instances::spd(n, rng, 0.0, 0.4);
    const Vector y = instances::gaussian_matrix(n, 1, rng);
    const auto s = gaussian_quadratic_identity(a, c, ux(rng), y);
    EXPECT_LE(std::abs(s.lhs - s.rhs), 1e-12);
  }
}

TEST(ClosedFormY0, Examples) {
  const auto path = one_level(0.9);
  EXPECT_NEAR(closed_form_Y0(Multiplier(s1(1.18)), path, ExternalField::zero(1), MixtureSpec::uniform(1, {{2, 0.3}})),
              -0.5 * std::log(1.18) + std::log(1.18 / 1.018) / 1.8, 1e-14);
  std::mt19937_64 rng(40);
  const SymMatrix lam = instances::spd(2, rng);
  EXPECT_NEAR(closed_form_Y0(Multiplier(lam), single_level_path(ConstraintMatrix::identity(2)), ExternalField::zero(2),
                             MixtureSpec::zero(2)),
              -0.5 * std::log(lam.determinant()), 1e-14);
}

TEST(Theta, Examples) {
  EXPECT_EQ(theta_term(one_level(0.4), MixtureSpec::zero(1)), 0.0);
  EXPECT_DOUBLE_EQ(theta_term(one_level(0.4), MixtureSpec::uniform(1, {{2, 0.7}})), 0.5 * 0.4 * 0.49);
}

TEST(ThetaProperty, AbelSummation) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_instance(rng, 1 + trial % 3, 2 + trial % 2);
    const int r = inst.path.levels();
    std::vector<double> s;
    for (int k = 0; k <= r; ++k) s.push_back(oracle::theta(inst.spec.terms(), inst.path.q(k)).sum());
    double abel = inst.path.x(r - 1) * s[static_cast<std::size_t>(r)] - inst.path.x(0) * s[0];
    for (int k = 1; k <= r - 1; ++k) abel -= (inst.path.x(k) - inst.path.x(k - 1)) * s[static_cast<std::size_t>(k)];
    EXPECT_NEAR(theta_term(inst.path, inst.spec), 0.5 * abel, 1e-14);
  }
}

TEST(GradientProperty, HessianMatchesGradientDifferences) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 3;
    const auto inst = random_instance(rng, n, 1 + trial % 3);
    const ParisiObjective obj(inst.path, inst.q, inst.h, inst.spec);
    const SymMatrix lam = instances::admissible_lambda(obj, rng).matrix();
    const SymBasis basis(n);
    const Matrix hess = obj.hessian(lam, basis);
    const double t = 1e-6;
    for (std::size_t a = 0; a < basis.size(); ++a) {
      const SymMatrix e = basis.element(a, n);
      const Vector col = (basis.dual(obj.gradient(lam + t * e)) - basis.dual(obj.gradient(lam - t * e))) / (2 * t);
      EXPECT_LE((col - hess.col(static_cast<Eigen::Index>(a))).norm(), 1e-6 * std::max(1.0, col.norm()));
    }
  }
}
