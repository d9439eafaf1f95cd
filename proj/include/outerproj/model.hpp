#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "outerproj/errors.hpp"
#include "outerproj/random.hpp"

namespace outerproj {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Margin losses phi(t) = -t + int_{-inf}^t f(s) ds built from an increasing
/// link f with f(0) = 1/2 and f(t) + f(-t) = 1.
enum class LossKind { Logistic, Matsusita };

/// phi(t), evaluated without overflow or cancellation for large |t|.
inline double loss_value(LossKind kind, double t) noexcept {
  switch (kind) {
    case LossKind::Logistic:
      return std::max(-t, 0.0) + std::log1p(std::exp(-std::abs(t)));
    case LossKind::Matsusita: {
      const double h = std::hypot(1.0, t);
      // (-t + h)/2 cancels for t >> 1; rationalize there.
      return t > 0.0 ? 0.5 / (t + h) : 0.5 * (h - t);
    }
  }
  return 0.0;
}

/// The link f: classifier score to posterior probability of class +1.
inline double posterior(LossKind kind, double s) noexcept {
  switch (kind) {
    case LossKind::Logistic:
      if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
      return std::exp(s) / (1.0 + std::exp(s));
    case LossKind::Matsusita:
      return 0.5 * (s / std::hypot(1.0, s) + 1.0);
  }
  return 0.5;
}

/// phi'(t) = f(t) - 1, in [-1, 0].
inline double loss_derivative(LossKind kind, double t) noexcept {
  switch (kind) {
    case LossKind::Logistic:
      if (t >= 0.0) {
        const double e = std::exp(-t);
        return -e / (1.0 + e);
      }
      return -1.0 / (1.0 + std::exp(t));
    case LossKind::Matsusita: {
      const double h = std::hypot(1.0, t);
      return t > 0.0 ? -0.5 / (h * (h + t)) : 0.5 * (t / h - 1.0);
    }
  }
  return -0.5;
}

/// phi''(0) = f'(0) = max phi''.
constexpr double loss_curvature_at_zero(LossKind kind) noexcept {
  return kind == LossKind::Logistic ? 0.25 : 0.5;
}

enum class Task { Classification, Regression };

/// Empirical risk over m samples (rows of X) in dimension d.
///
/// Classification:  Phi(w) = (1/m) sum phi(y_i <x_i, w>),   y_i in {-1, +1}
/// Regression:      Psi(w) = (1/2m) sum (<x_i, w> - y_i)^2
///
/// The Lipschitz constant of the gradient is fixed at construction.
class RiskModel {
 public:
  static RiskModel classification(Matrix X, Vector y, LossKind loss) {
    check_shapes(X, y);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] != 1.0 && y[i] != -1.0) {
        throw DataError("classification label at row " + std::to_string(i) +
                        " is not in {-1, +1}");
      }
    }
    const double beta = loss_curvature_at_zero(loss) * X.rowwise().squaredNorm().sum() /
                        static_cast<double>(X.rows());
    return RiskModel(std::move(X), std::move(y), Task::Classification, loss, beta);
  }

  static RiskModel regression(Matrix X, Vector y) {
    check_shapes(X, y);
    const double beta =
        kSpectralSafety * largest_eigenvalue_of_gram(X) / static_cast<double>(X.rows());
    return RiskModel(std::move(X), std::move(y), Task::Regression, LossKind::Logistic, beta);
  }

  Task task() const noexcept { return task_; }
  /// Meaningful for classification models only.
  LossKind loss() const noexcept { return loss_; }
  Eigen::Index num_samples() const noexcept { return X_.rows(); }
  Eigen::Index dim() const noexcept { return X_.cols(); }
  const Matrix& features() const noexcept { return X_; }
  const Vector& targets() const noexcept { return y_; }

  double value(const Vector& w) const {
    detail::require_dimension(w.size(), dim(), "risk value");
    const Vector scores = X_ * w;
    const double m = static_cast<double>(num_samples());
    if (task_ == Task::Regression) return (scores - y_).squaredNorm() / (2.0 * m);
    double total = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) total += loss_value(loss_, y_[i] * scores[i]);
    return total / m;
  }

  Vector gradient(const Vector& w) const {
    detail::require_dimension(w.size(), dim(), "risk gradient");
    Vector coeffs = X_ * w;
    if (task_ == Task::Regression) {
      coeffs -= y_;
    } else {
      for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
        coeffs[i] = y_[i] * loss_derivative(loss_, y_[i] * coeffs[i]);
      }
    }
    return X_.transpose() * coeffs / static_cast<double>(num_samples());
  }

  /// Upper bound on the Lipschitz constant of gradient().
  double lipschitz_bound() const noexcept { return beta_; }

  /// Raw classifier scores <x_i, w>.
  Vector scores(const Vector& w) const {
    detail::require_dimension(w.size(), dim(), "scores");
    return X_ * w;
  }

  static constexpr double kSpectralSafety = 1.05;
  static constexpr int kPowerIterations = 1000;
  static constexpr double kPowerTolerance = 1e-10;
  static constexpr std::uint64_t kPowerSeed = 0x5eed;

  /// Largest eigenvalue of X^T X (= sigma_1(X)^2) by power iteration.
  static double largest_eigenvalue_of_gram(const Matrix& X) {
    CounterRng rng(kPowerSeed);
    Vector v(X.cols());
    for (auto& c : v) c = rng.next_normal();
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < kPowerIterations; ++it) {
      Vector next = X.transpose() * (X * v);
      const double estimate = v.dot(next);
      const double norm = next.norm();
      if (norm == 0.0) return 0.0;
      v = next / norm;
      if (it > 0 && std::abs(estimate - lambda) <= kPowerTolerance * std::abs(estimate)) {
        return std::max(estimate, norm);
      }
      lambda = estimate;
    }
    return lambda;
  }

 private:
  RiskModel(Matrix X, Vector y, Task task, LossKind loss, double beta)
      : X_(std::move(X)), y_(std::move(y)), task_(task), loss_(loss), beta_(beta) {}

  static void check_shapes(const Matrix& X, const Vector& y) {
    if (X.rows() < 1 || X.cols() < 1) throw DataError("risk model needs m >= 1 and d >= 1");
    detail::require_dimension(y.size(), X.rows(), "targets vs samples");
    if (!X.allFinite() || !y.allFinite()) throw DataError("non-finite entry in samples or targets");
  }

  Matrix X_;
  Vector y_;
  Task task_;
  LossKind loss_;
  double beta_;
};

}  // namespace outerproj
