#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "outerproj/data.hpp"
#include "outerproj/metrics.hpp"
#include "outerproj/oracle.hpp"
#include "outerproj/solver.hpp"
#include "test_support.hpp"

namespace {

using namespace outerproj;
using testsupport::kAllKinds;
using testsupport::normal_matrix;
using testsupport::normal_vector;
using testsupport::random_constraint;
using testsupport::random_labels;

struct ConstantOne {
  double value(const Vector&) const { return 1.0; }
  Vector subgradient(const Vector& w) const { return Vector::Zero(w.size()); }
  double bound() const { return 0.0; }
};

// Labels drawn from a logistic model with a weak signal, so the classes
// overlap and the unconstrained minimizer is finite.
RiskModel noisy_classification(CounterRng& rng, Eigen::Index m, Eigen::Index d, LossKind loss) {
  const Matrix X = normal_matrix(rng, m, d);
  const Vector w = normal_vector(rng, d, 0.5);
  Vector y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    y[i] = rng.next_uniform() < posterior(LossKind::Logistic, X.row(i).dot(w)) ? 1.0 : -1.0;
  }
  return RiskModel::classification(X, y, loss);
}

RiskModel random_regression(CounterRng& rng, Eigen::Index m, Eigen::Index d) {
  return RiskModel::regression(normal_matrix(rng, m, d), normal_vector(rng, m));
}

TEST(Solve, ZeroBoundGivesZeroIterates) {
  CounterRng rng(1);
  const auto model = random_regression(rng, 20, 8);
  SolverConfig config;
  config.initial_weights = normal_vector(rng, 8);
  const auto result = solve(model, ConstraintSpec::l1(0.0), config);
  EXPECT_EQ(result.stop_reason, StopReason::Converged);
  EXPECT_EQ(result.weights, Vector::Zero(8));
  for (std::size_t n = 1; n < result.trace.size(); ++n) EXPECT_EQ(result.trace[n].nonzeros, 0u);
}

TEST(Solve, MatchesExactProjectionReferenceOnStronglyConvexInstance) {
  CounterRng rng(2);
  const Matrix X = normal_matrix(rng, 40, 15);
  const Vector y = normal_vector(rng, 40);
  const auto model = RiskModel::regression(X, y);
  const double eta = 0.5 * X.colPivHouseholderQr().solve(y).lpNorm<1>();
  const double reference = model.value(oracle::reference_solve(model, eta, 20000));
  SolverConfig config;
  config.projection.max_inner_iters = 500;
  config.max_outer_iters = 3000;
  config.rel_change_tolerance = 0.0;
  const auto result = solve(model, ConstraintSpec::l1(eta), config);
  EXPECT_NEAR(model.value(result.weights), reference, 1e-6);
  EXPECT_LE(result.weights.lpNorm<1>(), eta);
}

TEST(Solve, InteriorClassificationOptimumHasSmallGradient) {
  CounterRng rng(3);
  const auto model = noisy_classification(rng, 60, 3, LossKind::Logistic);
  // Unconstrained minimizer by long gradient descent.
  Vector w_star = Vector::Zero(3);
  for (int n = 0; n < 200000; ++n) w_star -= model.gradient(w_star) / model.lipschitz_bound();
  ASSERT_LE(model.gradient(w_star).norm(), 1e-10);

  SolverConfig config;
  config.max_outer_iters = 200000;
  config.rel_change_tolerance = 1e-12;
  const auto result = solve(model, ConstraintSpec::l1(10.0 * w_star.lpNorm<1>()), config);
  EXPECT_EQ(result.stop_reason, StopReason::Converged);
  EXPECT_LE(model.gradient(result.weights).norm(), 1e-4);
  EXPECT_LE((result.weights - w_star).norm(), 1e-4);
}

TEST(Solve, RiskIsMonotoneWithNearExactProjections) {
  // Low dimension and a large inner budget keep the projection error far
  // below the 1e-10 slack.
  CounterRng rng(4);
  SolverConfig config;
  config.projection.max_inner_iters = 20000;
  config.max_outer_iters = 300;
  for (int instance = 0; instance < 20; ++instance) {
    const bool classify = instance % 2 == 0;
    const auto model = classify ? noisy_classification(rng, 40, 5, instance % 4 == 0 ? LossKind::Logistic
                                                                                     : LossKind::Matsusita)
                                : random_regression(rng, 30, 5);
    const auto kind = kAllKinds[static_cast<std::size_t>(instance / 2) % 4];
    const auto result = solve(model, random_constraint(rng, kind, 5, 1.0), config);
    for (std::size_t n = 0; n + 1 < result.trace.size(); ++n) {
      EXPECT_LE(result.trace[n + 1].risk, result.trace[n].risk + 1e-10) << "instance " << instance << " n " << n;
    }
  }
}

TEST(Solve, DeterministicTraces) {
  CounterRng rng(5);
  const auto model = random_regression(rng, 30, 40);
  const auto constraint = random_constraint(rng, ConstraintKind::PairwiseMax, 40, 2.0);
  SolverConfig config;
  config.max_outer_iters = 200;
  const auto a = solve(model, constraint, config);
  const auto b = solve(model, constraint, config);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  EXPECT_EQ(a.weights, b.weights);
  for (std::size_t n = 0; n < a.trace.size(); ++n) {
    EXPECT_EQ(a.trace[n].risk, b.trace[n].risk);
    EXPECT_EQ(a.trace[n].constraint, b.trace[n].constraint);
    EXPECT_EQ(a.trace[n].inner_iterations, b.trace[n].inner_iterations);
  }
}

TEST(Solve, SingleAndMultiConstraintAgreePerIterate) {
  CounterRng rng(6);
  const auto model = random_regression(rng, 30, 50);
  for (ConstraintKind kind : kAllKinds) {
    const std::array<ConstraintSpec, 1> constraints = {random_constraint(rng, kind, 50, 1.5)};
    const std::array<double, 1> weights = {1.0};
    SolverConfig config;
    config.max_outer_iters = 100;
    config.rel_change_tolerance = 0.0;
    const auto single = solve(model, constraints[0], config);
    const auto multi = solve_multi(model, std::span<const ConstraintSpec>(constraints),
                                   std::span<const double>(weights), config);
    ASSERT_EQ(single.trace.size(), multi.trace.size());
    for (std::size_t n = 0; n < single.trace.size(); ++n) {
      EXPECT_NEAR(single.trace[n].risk, multi.trace[n].risk, 1e-12);
    }
    EXPECT_LE((single.weights - multi.weights).norm(), 1e-12);
  }
}

TEST(Solve, TraceLengthIsOuterIterationsPlusOne) {
  CounterRng rng(7);
  const auto model = random_regression(rng, 20, 30);
  SolverConfig config;
  config.max_outer_iters = 37;
  config.rel_change_tolerance = 0.0;
  const auto result = solve(model, ConstraintSpec::l1(1.0), config);
  EXPECT_EQ(result.stop_reason, StopReason::MaxIters);
  EXPECT_EQ(result.outer_iterations(), 37);
  EXPECT_EQ(result.trace.size(), 38u);
  EXPECT_EQ(result.trace.front().iteration, 0);
  EXPECT_EQ(result.trace.back().iteration, 37);
}

TEST(Solve, FinalIterateIsFeasible) {
  CounterRng rng(8);
  for (ConstraintKind kind : kAllKinds) {
    const auto model = random_regression(rng, 30, 50);
    const auto constraint = random_constraint(rng, kind, 50, 1.0);
    SolverConfig config;
    config.projection.max_inner_iters = 2;
    config.max_outer_iters = 50;
    const auto result = solve(model, constraint, config);
    EXPECT_LE(constraint.value(result.weights), constraint.bound() + 1e-9) << constraint_kind_name(kind);
    EXPECT_GT(result.trace.back().violation, 0.0);
    EXPECT_LT(result.restoration_scale, 1.0);

    config.restore_feasibility = false;
    const auto raw = solve(model, constraint, config);
    EXPECT_GT(constraint.value(raw.weights), constraint.bound()) << constraint_kind_name(kind);
    EXPECT_EQ(raw.restoration_scale, 1.0);
    EXPECT_EQ(Vector(result.restoration_scale * raw.weights), result.weights);
    EXPECT_EQ(raw.trace.back().risk, result.trace.back().risk);
  }
}

TEST(Solve, TargetSparsityStopsEarly) {
  CounterRng rng(9);
  const auto model = random_regression(rng, 30, 60);
  SolverConfig config;
  // Budget-limited projections leave off-support coordinates near 1e-5
  // rather than exactly zero, so count against a coarser threshold.
  config.zero_threshold = 1e-4;
  config.target_l0 = 20;
  config.max_outer_iters = 5000;
  const auto result = solve(model, ConstraintSpec::l1(0.5), config);
  EXPECT_EQ(result.stop_reason, StopReason::TargetSparsity);
  EXPECT_LE(count_nonzeros(result.weights, config.zero_threshold), 20u);
  for (std::size_t n = 1; n + 1 < result.trace.size(); ++n) EXPECT_GT(result.trace[n].nonzeros, 20u);
}

TEST(Solve, StrictScheduleTightensViolation) {
  CounterRng rng(10);
  const auto model = random_regression(rng, 30, 50);
  SolverConfig config;
  config.max_outer_iters = 200;
  config.rel_change_tolerance = 0.0;
  config.restore_feasibility = false;
  config.strict_schedule = ErrorSchedule{};
  const auto result = solve(model, ConstraintSpec::l1(1.0), config);
  for (std::size_t n = 1; n < result.trace.size(); ++n) {
    const double allowed = 1.0 / std::pow(static_cast<double>(n), 1.1);
    EXPECT_LE(result.trace[n].violation, allowed) << "n " << n;
  }
}

TEST(Solve, ReportsNumericalBlowUp) {
  CounterRng rng(11);
  const auto model = random_regression(rng, 20, 10);
  SolverConfig config;
  config.step = FixedStep{1e200};
  try {
    solve(model, ConstraintSpec::l1(1e300), config);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_LE(e.iteration(), 5u);
  }
}

TEST(Solve, EmptyLevelSetIsAnError) {
  CounterRng rng(12);
  const auto model = random_regression(rng, 20, 4);
  EXPECT_THROW(solve(model, ConstantOne{}, {}), InfeasibleConstraintError);
}

TEST(Solve, RejectsInvalidConfiguration) {
  CounterRng rng(13);
  const auto model = random_regression(rng, 20, 4);
  SolverConfig config;
  config.step = ConstantOverBeta{2.5};
  EXPECT_THROW(solve(model, ConstraintSpec::l1(1.0), config), DataError);
  config.step = ConstantOverBeta{1.0};
  config.max_outer_iters = 0;
  EXPECT_THROW(solve(model, ConstraintSpec::l1(1.0), config), DataError);
  config.max_outer_iters = 10;
  config.initial_weights = Vector::Zero(3);
  EXPECT_THROW(solve(model, ConstraintSpec::l1(1.0), config), DimensionError);
}

TEST(SolvePath, SingleBoundMatchesSolve) {
  CounterRng rng(14);
  const auto model = random_regression(rng, 30, 40);
  const auto constraint = random_constraint(rng, ConstraintKind::PairwiseDiff, 40, 1.0);
  SolverConfig config;
  config.max_outer_iters = 300;
  const std::array<double, 1> grid = {3.0};
  const auto path = solve_path(model, constraint, grid, config);
  const auto direct = solve(model, constraint.with_bound(3.0), config);
  ASSERT_EQ(path.size(), 1u);
  EXPECT_EQ(path[0].eta, 3.0);
  EXPECT_EQ(path[0].result.weights, direct.weights);
  EXPECT_EQ(path[0].result.trace.size(), direct.trace.size());
}

TEST(SolvePath, EveryRunIsFeasible) {
  CounterRng rng(15);
  const auto model = random_regression(rng, 30, 40);
  SolverConfig config;
  config.max_outer_iters = 300;
  for (const std::vector<double>& grid : {std::vector<double>{0.5, 2.0}, std::vector<double>{2.0, 0.5}}) {
    for (const PathPoint& point : solve_path(model, ConstraintSpec::l1(1.0), grid, config)) {
      EXPECT_LE(point.result.weights.lpNorm<1>(), point.eta + 1e-9);
    }
  }
  const std::array<double, 3> unsorted = {1.0, 3.0, 2.0};
  EXPECT_THROW(solve_path(model, ConstraintSpec::l1(1.0), unsorted, config), DataError);
}

TEST(SolvePath, ExampleTwoCurveHasInteriorMinimum) {
  data::NetworkParams params;
  params.seed = 21;
  const auto net = data::generate_network(params);
  const Vector w_true = data::true_regressor(data::Example::Two, params.dim());
  const Vector y = data::generate_response(net.X, w_true, params.noise_sigma, 22);
  const auto split = data::random_splits(params.samples, 0.5, 1, 23).front();
  const auto model =
      RiskModel::regression(data::select_rows(net.X, split.train), data::select_rows(y, split.train));
  const Matrix X_test = data::select_rows(net.X, split.test);
  const Vector y_test = data::select_rows(y, split.test);

  std::vector<double> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(2.0 * std::pow(150.0, i / 19.0));
  SolverConfig config;
  config.max_outer_iters = 500;
  config.rel_change_tolerance = 1e-6;
  const auto path = solve_path(model, ConstraintSpec::l1(1.0), grid, config);
  ASSERT_EQ(path.size(), 20u);
  std::size_t best = 0;
  std::vector<double> pmse;
  for (const PathPoint& point : path) {
    pmse.push_back(metrics::mse(y_test, X_test * point.result.weights));
    ASSERT_TRUE(std::isfinite(pmse.back()));
    if (pmse.back() < pmse[best]) best = pmse.size() - 1;
  }
  EXPECT_GT(best, 0u);
  EXPECT_LT(best, 19u);
}

}  // namespace
