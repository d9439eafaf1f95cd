#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "outerproj/constraints.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"
#include "outerproj/projection.hpp"

namespace outerproj {

/// gamma = scale / beta. The scale must stay in [1e-3, 2 - 1e-3] so that
/// gamma is bounded away from 0 and from 2/beta.
struct ConstantOverBeta {
  double scale = 1.0;
};

/// A fixed step gamma, independent of the Lipschitz bound.
struct FixedStep {
  double gamma = 1.0;
};

using StepPolicy = std::variant<ConstantOverBeta, FixedStep>;

/// Inner-loop schedule that makes the projection errors summable: at outer
/// iteration n the inner loop runs until the violation is at most
/// xi / (n+1)^exponent, with up to max_inner_iters steps.
struct ErrorSchedule {
  double xi = 1.0;
  double exponent = 1.1;
  int max_inner_iters = 10000;
};

struct SolverConfig {
  StepPolicy step = ConstantOverBeta{};
  ProjectionOptions projection;
  int max_outer_iters = 10000;
  /// Converged once |w_{n+1} - w_n| <= tol * max(1, |w_{n+1}|).
  double rel_change_tolerance = 1e-8;
  /// Stop as soon as the iterate has at most this many nonzeros.
  std::optional<std::size_t> target_l0;
  /// Coordinates with |w_i| <= zero_threshold count as zero.
  double zero_threshold = 1e-10;
  /// Starting point; zero when unset.
  std::optional<Vector> initial_weights;
  /// When set, overrides the projection budget and tolerance per iteration.
  std::optional<ErrorSchedule> strict_schedule;
  /// Scale the returned weights toward the origin until they satisfy the
  /// constraint up to projection.feasibility_tolerance. Applies only when the
  /// origin is feasible; the trace keeps the unscaled iterates.
  bool restore_feasibility = true;
};

struct TraceRecord {
  int iteration = 0;
  double risk = 0.0;
  /// value(w_n) of the (first) constraint.
  double constraint = 0.0;
  /// max_j max(value_j(w_n) - eta_j, 0).
  double violation = 0.0;
  std::size_t nonzeros = 0;
  /// Inner projection iterations spent producing w_n (0 for w_0).
  int inner_iterations = 0;
};

enum class StopReason { Converged, MaxIters, TargetSparsity };

inline const char* stop_reason_name(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxIters: return "max-iters";
    case StopReason::TargetSparsity: return "target-sparsity";
  }
  return "?";
}

struct SolverResult {
  /// restoration_scale * w_N.
  Vector weights;
  /// One record per iterate w_0 .. w_N of the projection-gradient loop.
  std::vector<TraceRecord> trace;
  StopReason stop_reason = StopReason::MaxIters;
  /// Factor in ]0, 1] applied to w_N to make it feasible; 1 when w_N already
  /// was (see SolverConfig::restore_feasibility).
  double restoration_scale = 1.0;

  int outer_iterations() const noexcept { return static_cast<int>(trace.size()) - 1; }
};

struct PathPoint {
  double eta = 0.0;
  SolverResult result;
};

inline std::size_t count_nonzeros(const Vector& w, double zero_threshold) noexcept {
  std::size_t n = 0;
  for (double x : w) n += std::abs(x) > zero_threshold ? 1 : 0;
  return n;
}

namespace detail {

inline double step_size(const StepPolicy& policy, double beta) {
  if (const auto* c = std::get_if<ConstantOverBeta>(&policy)) {
    constexpr double margin = 1e-3;
    if (!(c->scale >= margin && c->scale <= 2.0 - margin)) {
      throw DataError("step scale must lie in [1e-3, 2 - 1e-3]");
    }
    if (!(beta > 0.0)) throw DataError("Lipschitz bound is zero; use a fixed step");
    return c->scale / beta;
  }
  const double gamma = std::get<FixedStep>(policy).gamma;
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DataError("fixed step must be positive");
  return gamma;
}

inline ProjectionOptions inner_options(const SolverConfig& config, int n) {
  if (!config.strict_schedule) return config.projection;
  ProjectionOptions opts = config.projection;
  const ErrorSchedule& s = *config.strict_schedule;
  opts.max_inner_iters = s.max_inner_iters;
  opts.feasibility_tolerance = s.xi / std::pow(static_cast<double>(n + 1), s.exponent);
  return opts;
}

/// Largest t in [0, 1] (to bisection accuracy) with t * w feasible, given
/// that the origin is feasible and w is not.
template <typename Measure>
double origin_retraction_scale(const Vector& w, double tolerance, Measure&& measure) {
  double feasible = 0.0;
  double infeasible = 1.0;
  for (int i = 0; i < 64 && infeasible - feasible > 0.0; ++i) {
    const double mid = 0.5 * (feasible + infeasible);
    if (mid <= feasible || mid >= infeasible) break;
    if (measure(Vector(mid * w)).second <= tolerance) {
      feasible = mid;
    } else {
      infeasible = mid;
    }
  }
  return feasible;
}

/// Projection-gradient loop  w_{n+1} = approx P_C(w_n - gamma grad(w_n)).
/// `project(v, opts)` returns a ProjectionResult; `measure(w)` returns the
/// (constraint, violation) pair recorded in the trace.
template <typename Project, typename Measure>
SolverResult run_projected_gradient(const RiskModel& model, const SolverConfig& config,
                                    Project&& project, Measure&& measure) {
  if (config.max_outer_iters < 1) throw DataError("max_outer_iters must be >= 1");
  const double gamma = step_size(config.step, model.lipschitz_bound());

  Vector w = config.initial_weights ? *config.initial_weights : Vector::Zero(model.dim());
  detail::require_dimension(w.size(), model.dim(), "initial weights");

  SolverResult result;
  result.trace.reserve(static_cast<std::size_t>(std::min(config.max_outer_iters, 100000)) + 1);
  auto record = [&](int n, const Vector& point, int inner) {
    const double risk = model.value(point);
    if (!std::isfinite(risk)) throw NumericalError("non-finite risk value", static_cast<std::size_t>(n));
    const auto [constraint, violation] = measure(point);
    result.trace.push_back({n, risk, constraint, violation,
                            count_nonzeros(point, config.zero_threshold), inner});
  };
  record(0, w, 0);

  result.stop_reason = StopReason::MaxIters;
  for (int n = 0; n < config.max_outer_iters; ++n) {
    const Vector gradient = model.gradient(w);
    if (!gradient.allFinite()) {
      throw NumericalError("non-finite risk gradient", static_cast<std::size_t>(n));
    }
    const Vector step = w - gamma * gradient;
    if (!std::isfinite(step.squaredNorm())) {
      throw NumericalError("gradient step overflows", static_cast<std::size_t>(n));
    }
    ProjectionResult projected = project(step, inner_options(config, n));
    if (projected.status.outcome == ProjectionOutcome::InfeasibleConstraint) {
      throw InfeasibleConstraintError("constraint level set is empty (outer iteration " +
                                      std::to_string(n) + ")");
    }
    record(n + 1, projected.point, projected.status.iterations_used);

    const double change = (projected.point - w).norm();
    w = std::move(projected.point);
    if (config.target_l0 && result.trace.back().nonzeros <= *config.target_l0) {
      result.stop_reason = StopReason::TargetSparsity;
      break;
    }
    if (change <= config.rel_change_tolerance * std::max(1.0, w.norm())) {
      result.stop_reason = StopReason::Converged;
      break;
    }
  }

  const double tolerance = config.projection.feasibility_tolerance;
  if (config.restore_feasibility && measure(w).second > tolerance) {
    const Vector origin = Vector::Zero(w.size());
    if (measure(origin).second <= tolerance) {
      result.restoration_scale = origin_retraction_scale(w, tolerance, measure);
      w *= result.restoration_scale;
    }
  }
  result.weights = std::move(w);
  return result;
}

}  // namespace detail

/// Minimizes the risk over {phi <= eta} with the projection-gradient method,
/// computing each projection by outer approximation.
template <LevelSetFunction C>
SolverResult solve(const RiskModel& model, const C& constraint, const SolverConfig& config = {}) {
  return detail::run_projected_gradient(
      model, config,
      [&](const Vector& v, const ProjectionOptions& opts) {
        return project_level_set(constraint, v, opts);
      },
      [&](const Vector& w) {
        const double value = constraint.value(w);
        return std::pair{value, std::max(value - constraint.bound(), 0.0)};
      });
}

/// Same loop over an intersection of level sets, each projection computed
/// with project_level_set_multi.
template <LevelSetFunction C>
SolverResult solve_multi(const RiskModel& model, std::span<const C> constraints,
                         std::span<const double> weights, const SolverConfig& config = {}) {
  return detail::run_projected_gradient(
      model, config,
      [&](const Vector& v, const ProjectionOptions& opts) {
        return project_level_set_multi(constraints, weights, v, opts);
      },
      [&](const Vector& w) {
        double violation = 0.0;
        double first = 0.0;
        for (std::size_t j = 0; j < constraints.size(); ++j) {
          const double value = constraints[j].value(w);
          if (j == 0) first = value;
          violation = std::max(violation, value - constraints[j].bound());
        }
        return std::pair{first, violation};
      });
}

/// One solve per bound in `eta_grid` (sorted either way), each warm-started
/// from the previous solution.
inline std::vector<PathPoint> solve_path(const RiskModel& model, const ConstraintSpec& constraint,
                                         std::span<const double> eta_grid,
                                         const SolverConfig& config = {}) {
  const bool ascending = std::is_sorted(eta_grid.begin(), eta_grid.end());
  const bool descending = std::is_sorted(eta_grid.begin(), eta_grid.end(), std::greater<>{});
  if (!ascending && !descending) throw DataError("eta grid must be sorted");

  std::vector<PathPoint> path;
  path.reserve(eta_grid.size());
  SolverConfig run = config;
  for (double eta : eta_grid) {
    SolverResult result = solve(model, constraint.with_bound(eta), run);
    run.initial_weights = result.weights;
    path.push_back({eta, std::move(result)});
  }
  return path;
}

}  // namespace outerproj
