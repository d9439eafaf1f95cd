#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"

namespace outerproj::metrics {

/// Mean squared residual. Used as MSE on training data and PMSE on held-out data.
inline double mse(const Vector& y_true, const Vector& y_pred) {
  detail::require_dimension(y_pred.size(), y_true.size(), "mse");
  if (y_true.size() == 0) throw DataError("mse of an empty sample");
  return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size());
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs in which the positive scores higher, ties
/// counting one half. Computed from average ranks in O(m log m).
inline double auc(const Vector& labels, const Vector& scores) {
  detail::require_dimension(scores.size(), labels.size(), "auc");
  const auto m = static_cast<std::size_t>(labels.size());
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < m;) {
    std::size_t end = start;
    while (end < m && scores[static_cast<Eigen::Index>(order[end])] == scores[static_cast<Eigen::Index>(order[start])]) ++end;
    const double average_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[static_cast<Eigen::Index>(order[k])] > 0.0) {
        positive_rank_sum += average_rank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = m - positives;
  if (positives == 0 || negatives == 0) throw DataError("auc needs both classes present");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

/// AUC of the posterior probabilities f(<x_i, w>).
inline double auc_from_scores(LossKind loss, const Vector& labels, const Vector& raw_scores) {
  return auc(labels, raw_scores.unaryExpr([loss](double s) { return posterior(loss, s); }));
}

}  // namespace outerproj::metrics
