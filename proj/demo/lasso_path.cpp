// Sweeps the l1 and signed pairwise-difference bounds on one synthetic
// regulatory-network dataset and prints train MSE and test PMSE per bound.

#include <cmath>
#include <cstdio>
#include <vector>

#include "outerproj/outerproj.hpp"

int main() {
  using namespace outerproj;

  data::NetworkParams params;
  params.samples = 200;
  params.seed = 7;
  const data::Network net = data::generate_network(params);
  const Vector w_true = data::true_regressor(data::Example::Two, params.dim());
  const Vector y = data::generate_response(net.X, w_true, params.noise_sigma, 8);
  const data::Split split = data::random_splits(params.samples, 0.5, 1, 9).front();

  const Matrix X_train = data::select_rows(net.X, split.train);
  const Matrix X_test = data::select_rows(net.X, split.test);
  const Vector y_train = data::select_rows(y, split.train);
  const Vector y_test = data::select_rows(y, split.test);
  const RiskModel model = RiskModel::regression(X_train, y_train);

  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(5.0 * std::pow(40.0, i / 9.0));

  SolverConfig config;
  config.projection.max_inner_iters = 50;
  config.max_outer_iters = 1000;
  config.rel_change_tolerance = 1e-6;

  const ConstraintSpec constraints[] = {
      ConstraintSpec::l1(1.0),
      ConstraintSpec::with_graph(ConstraintKind::SignedPairwiseDiff,
                                 data::signed_graph_for_example(data::Example::Two, params.dim()), 1.0)};
  for (const ConstraintSpec& constraint : constraints) {
    std::printf("%s\n%10s %12s %12s %8s\n", constraint_kind_name(constraint.kind()), "eta", "train_mse",
                "test_pmse", "nonzero");
    for (const PathPoint& point : solve_path(model, constraint, grid, config)) {
      const Vector& w = point.result.weights;
      std::printf("%10.3f %12.4f %12.4f %8zu\n", point.eta, metrics::mse(y_train, X_train * w),
                  metrics::mse(y_test, X_test * w), count_nonzeros(w, config.zero_threshold));
    }
  }
  return 0;
}
