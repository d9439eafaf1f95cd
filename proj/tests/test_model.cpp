#include <gtest/gtest.h>

#include <cmath>

#include "outerproj/model.hpp"
#include "outerproj/oracle.hpp"
#include "test_support.hpp"

namespace {

using namespace outerproj;
using testsupport::normal_matrix;
using testsupport::normal_vector;
using testsupport::random_labels;

constexpr LossKind kLosses[] = {LossKind::Logistic, LossKind::Matsusita};

// Loss evaluated in extended precision straight from its definition.
long double loss_long(LossKind kind, long double t) {
  if (kind == LossKind::Logistic) return std::log1p(std::exp(-t));
  return 0.5L * (-t + std::sqrt(1.0L + t * t));
}

TEST(LossValue, LogisticAtZeroIsLogTwo) {
  EXPECT_NEAR(loss_value(LossKind::Logistic, 0.0), std::log(2.0), 1e-15);
}

TEST(LossValue, MatsusitaAtZeroIsHalf) { EXPECT_DOUBLE_EQ(loss_value(LossKind::Matsusita, 0.0), 0.5); }

TEST(LossValue, LogisticLargeNegativeMarginDoesNotOverflow) {
  const double got = loss_value(LossKind::Logistic, -800.0);
  ASSERT_TRUE(std::isfinite(got));
  const auto want = static_cast<double>(loss_long(LossKind::Logistic, -800.0L));
  EXPECT_NEAR(got, want, 1e-12 * want);
}

TEST(LossValue, MatchesExtendedPrecisionOverWideRange) {
  CounterRng rng(101);
  for (LossKind kind : kLosses) {
    for (int i = 0; i < 1000; ++i) {
      const double t = 60.0 * (2.0 * rng.next_uniform() - 1.0);
      const auto want = static_cast<double>(loss_long(kind, t));
      EXPECT_NEAR(loss_value(kind, t), want, 1e-14 * std::max(1.0, want)) << "t=" << t;
    }
  }
}

TEST(LossDerivative, AtZeroIsMinusHalf) {
  EXPECT_DOUBLE_EQ(loss_derivative(LossKind::Logistic, 0.0), -0.5);
  EXPECT_DOUBLE_EQ(loss_derivative(LossKind::Matsusita, 0.0), -0.5);
}

TEST(LossDerivative, LogisticMatchesCentralDifference) {
  const double h = 1e-5;
  const double fd = (loss_value(LossKind::Logistic, 2.0 + h) - loss_value(LossKind::Logistic, 2.0 - h)) / (2 * h);
  EXPECT_NEAR(loss_derivative(LossKind::Logistic, 2.0), fd, 1e-8);
}

TEST(LossDerivative, MatchesCentralDifferenceForBothLosses) {
  CounterRng rng(102);
  const double h = 1e-5;
  for (LossKind kind : kLosses) {
    for (int i = 0; i < 200; ++i) {
      const double t = 10.0 * (2.0 * rng.next_uniform() - 1.0);
      const double fd = (loss_value(kind, t + h) - loss_value(kind, t - h)) / (2 * h);
      EXPECT_NEAR(loss_derivative(kind, t), fd, 1e-8) << "t=" << t;
    }
  }
}

TEST(Posterior, HalfAtZero) {
  for (LossKind kind : kLosses) EXPECT_DOUBLE_EQ(posterior(kind, 0.0), 0.5);
}

TEST(Posterior, LogisticAtOne) {
  const auto want = static_cast<double>(1.0L / (1.0L + std::exp(-1.0L)));
  EXPECT_NEAR(posterior(LossKind::Logistic, 1.0), want, 1e-15);
  EXPECT_NEAR(posterior(LossKind::Logistic, 1.0), 0.731059, 1e-6);
}

TEST(Posterior, MatsusitaAntisymmetry) {
  CounterRng rng(103);
  for (int i = 0; i < 100; ++i) {
    const double s = 20.0 * rng.next_normal();
    EXPECT_NEAR(posterior(LossKind::Matsusita, -s), 1.0 - posterior(LossKind::Matsusita, s), 1e-12);
  }
}

TEST(LossProperties, IdentitiesHoldEverywhere) {
  CounterRng rng(104);
  for (LossKind kind : kLosses) {
    for (int i = 0; i < 2000; ++i) {
      const double scale = i % 2 == 0 ? 5.0 : 500.0;
      const double t = scale * rng.next_normal();
      const double f = posterior(kind, t);
      EXPECT_NEAR(loss_derivative(kind, t), f - 1.0, 1e-12);
      EXPECT_LE(std::abs(loss_derivative(kind, t)), 1.0);
      EXPECT_NEAR(f + posterior(kind, -t), 1.0, 1e-12);
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
    }
  }
}

TEST(LossProperties, PosteriorIsIncreasing) {
  for (LossKind kind : kLosses) {
    double previous = posterior(kind, -30.0);
    for (double t = -29.9; t <= 30.0; t += 0.1) {
      const double f = posterior(kind, t);
      EXPECT_GE(f, previous);
      previous = f;
    }
  }
}

TEST(LossProperties, ConvexityProbe) {
  CounterRng rng(105);
  for (LossKind kind : kLosses) {
    for (int i = 0; i < 1000; ++i) {
      const double t1 = 10.0 * rng.next_normal();
      const double t2 = 10.0 * rng.next_normal();
      const double lambda = rng.next_uniform();
      const double lhs = loss_value(kind, lambda * t1 + (1 - lambda) * t2);
      const double rhs = lambda * loss_value(kind, t1) + (1 - lambda) * loss_value(kind, t2);
      EXPECT_LE(lhs, rhs + 1e-12);
    }
  }
}

TEST(RiskValue, ClassificationAtZeroIsLogTwo) {
  CounterRng rng(201);
  const auto model = RiskModel::classification(normal_matrix(rng, 15, 4), random_labels(rng, 15), LossKind::Logistic);
  EXPECT_NEAR(model.value(Vector::Zero(4)), std::log(2.0), 1e-15);
}

TEST(RiskValue, RegressionAtZeroIsHalfMeanSquare) {
  CounterRng rng(202);
  const Vector y = normal_vector(rng, 12);
  const auto model = RiskModel::regression(normal_matrix(rng, 12, 3), y);
  double want = 0.0;
  for (double v : y) want += v * v;
  want /= 2.0 * 12.0;
  EXPECT_NEAR(model.value(Vector::Zero(3)), want, 1e-15);
}

TEST(RiskValue, SingleSampleScalarEvaluation) {
  Matrix X(1, 2);
  X << 1.0, 0.0;
  Vector y(1);
  y << 1.0;
  const auto model = RiskModel::classification(X, y, LossKind::Logistic);
  Vector w(2);
  w << 2.0, 5.0;
  EXPECT_NEAR(model.value(w), std::log1p(std::exp(-2.0)), 1e-15);
}

TEST(RiskGradient, ClassificationAtZero) {
  CounterRng rng(203);
  const Matrix X = normal_matrix(rng, 9, 5);
  const Vector y = random_labels(rng, 9);
  const auto model = RiskModel::classification(X, y, LossKind::Logistic);
  Vector want = Vector::Zero(5);
  for (Eigen::Index i = 0; i < 9; ++i) want -= y[i] * X.row(i).transpose();
  want /= 2.0 * 9.0;
  EXPECT_LE((model.gradient(Vector::Zero(5)) - want).norm(), 1e-15);
}

void expect_gradient_matches_finite_differences(const RiskModel& model, CounterRng& rng, int points) {
  for (int k = 0; k < points; ++k) {
    const Vector w = normal_vector(rng, model.dim());
    const Vector g = model.gradient(w);
    const Vector fd =
        oracle::finite_difference_gradient([&](const Vector& v) { return model.value(v); }, w, 1e-5);
    EXPECT_LE((g - fd).norm() / g.norm(), 1e-5) << "point " << k;
  }
}

TEST(RiskGradient, MatchesFiniteDifferencesForEveryLoss) {
  CounterRng rng(204);
  const Matrix X = normal_matrix(rng, 20, 10);
  for (LossKind kind : kLosses) {
    expect_gradient_matches_finite_differences(RiskModel::classification(X, random_labels(rng, 20), kind), rng, 20);
  }
  expect_gradient_matches_finite_differences(RiskModel::regression(X, normal_vector(rng, 20)), rng, 20);
}

TEST(RiskGradient, VanishesAtNormalEquationsSolution) {
  CounterRng rng(205);
  const Matrix X = normal_matrix(rng, 30, 8);
  const Vector y = normal_vector(rng, 30);
  const Vector w_star = X.colPivHouseholderQr().solve(y);
  const auto model = RiskModel::regression(X, y);
  EXPECT_LE(model.gradient(w_star).norm(), 1e-10);
}

TEST(Lipschitz, LogisticUnitRowsIsQuarter) {
  CounterRng rng(301);
  Matrix X = normal_matrix(rng, 25, 6);
  X.rowwise().normalize();
  const auto model = RiskModel::classification(X, random_labels(rng, 25), LossKind::Logistic);
  EXPECT_NEAR(model.lipschitz_bound(), 0.25, 1e-15);
}

TEST(Lipschitz, MatsusitaSingleSample) {
  Matrix X(1, 2);
  X << 2.0, 0.0;
  Vector y(1);
  y << -1.0;
  EXPECT_NEAR(RiskModel::classification(X, y, LossKind::Matsusita).lipschitz_bound(), 2.0, 1e-15);
}

TEST(Lipschitz, RegressionIdentityDesign) {
  const int m = 7;
  const auto model = RiskModel::regression(Matrix::Identity(m, m), Vector::Ones(m));
  EXPECT_NEAR(model.lipschitz_bound(), RiskModel::kSpectralSafety / m, 1e-12);
  CounterRng rng(302);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector u = normal_vector(rng, m);
    const Vector v = normal_vector(rng, m);
    worst = std::max(worst, (model.gradient(u) - model.gradient(v)).norm() / (u - v).norm());
  }
  EXPECT_NEAR(worst, 1.0 / m, 1e-12);
  EXPECT_LE(worst, model.lipschitz_bound());
}

TEST(Lipschitz, LargestEigenvalueMatchesDenseSolver) {
  CounterRng rng(303);
  const Matrix X = normal_matrix(rng, 30, 50);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(X.transpose() * X);
  EXPECT_NEAR(RiskModel::largest_eigenvalue_of_gram(X), eig.eigenvalues().maxCoeff(),
              1e-8 * eig.eigenvalues().maxCoeff());
}

void expect_lipschitz_bound_holds(const RiskModel& model, CounterRng& rng) {
  const double beta = model.lipschitz_bound();
  for (int k = 0; k < 1000; ++k) {
    const double scale = k % 3 == 0 ? 0.01 : 2.0;
    const Vector u = normal_vector(rng, model.dim(), scale);
    const Vector v = u + normal_vector(rng, model.dim(), scale);
    EXPECT_LE((model.gradient(u) - model.gradient(v)).norm(), beta * (u - v).norm());
  }
}

TEST(Lipschitz, BoundHoldsOnRandomPairs) {
  CounterRng rng(304);
  const Matrix X = normal_matrix(rng, 40, 12);
  for (LossKind kind : kLosses) {
    expect_lipschitz_bound_holds(RiskModel::classification(X, random_labels(rng, 40), kind), rng);
  }
  expect_lipschitz_bound_holds(RiskModel::regression(X, normal_vector(rng, 40)), rng);
  expect_lipschitz_bound_holds(RiskModel::regression(normal_matrix(rng, 30, 50), normal_vector(rng, 30)), rng);
}

TEST(RiskModelErrors, RejectsBadInput) {
  CounterRng rng(401);
  const Matrix X = normal_matrix(rng, 5, 3);
  Vector bad_labels = random_labels(rng, 5);
  bad_labels[2] = 0.5;
  EXPECT_THROW(RiskModel::classification(X, bad_labels, LossKind::Logistic), DataError);
  EXPECT_THROW(RiskModel::regression(X, Vector::Zero(4)), DimensionError);
  EXPECT_THROW(RiskModel::regression(Matrix(0, 3), Vector(0)), DataError);
  const auto model = RiskModel::regression(X, Vector::Zero(5));
  EXPECT_THROW(model.value(Vector::Zero(4)), DimensionError);
  EXPECT_THROW(model.gradient(Vector::Zero(2)), DimensionError);
}

}  // namespace
