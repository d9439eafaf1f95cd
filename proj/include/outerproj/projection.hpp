#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "outerproj/constraints.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"

namespace outerproj {

struct ProjectionOptions {
  /// Inner iteration budget K.
  int max_inner_iters = 50;
  /// A point with value(p) - eta <= this counts as feasible. 0 means only
  /// exact membership stops the loop early.
  double feasibility_tolerance = 0.0;
  /// Stop once successive iterates move by at most this much.
  std::optional<double> distance_tolerance;
};

enum class ProjectionOutcome { FeasibleHit, BudgetExhausted, ToleranceMet, InfeasibleConstraint };

struct ProjectionStatus {
  ProjectionOutcome outcome = ProjectionOutcome::FeasibleHit;
  int iterations_used = 0;
  /// max(value(p) - eta, 0) at the returned point.
  double final_violation = 0.0;
};

struct ProjectionResult {
  Vector point;
  ProjectionStatus status;
};

inline const char* outcome_name(ProjectionOutcome outcome) noexcept {
  switch (outcome) {
    case ProjectionOutcome::FeasibleHit: return "feasible-hit";
    case ProjectionOutcome::BudgetExhausted: return "budget-exhausted";
    case ProjectionOutcome::ToleranceMet: return "tolerance-met";
    case ProjectionOutcome::InfeasibleConstraint: return "infeasible-constraint";
  }
  return "?";
}

/// Observer that ignores the inner iterates.
struct NoObserver {
  void operator()(int, const Vector&) const noexcept {}
};

namespace detail {

/// Writes Q(x,y,z) into `out`, which must not alias x, y or z.
inline void haugazeau_q_into(const Vector& x, const Vector& y, const Vector& z, Vector& out) {
  const double chi = (x - y).dot(y - z);
  const double mu = (x - y).squaredNorm();
  const double nu = (y - z).squaredNorm();
  double rho = mu * nu - chi * chi;
  if (std::abs(rho) <= 64.0 * std::numeric_limits<double>::epsilon() * mu * nu) rho = 0.0;

  if (rho <= 0.0) {
    if (chi >= 0.0) {
      out = z;
      return;
    }
    throw InconsistentHalfSpacesError("haugazeau_q: half-spaces H(x,y) and H(y,z) are disjoint");
  }
  if (chi * nu >= rho) {
    out = x - (1.0 + chi / nu) * (y - z);
    return;
  }
  const double scale = nu / rho;
  out = y + (scale * chi) * (x - y) - (scale * mu) * (y - z);
}

}  // namespace detail

/// Projection of x onto H(x,y) ∩ H(y,z), where H(u,v) = {p : <p - v, u - v> <= 0}.
///
/// With a = x - y, b = y - z, chi = <a,b>, mu = |a|^2, nu = |b|^2 and
/// rho = mu nu - chi^2 the result is
///   z                                 if rho = 0 and chi >= 0
///   x - (1 + chi/nu) b                if rho > 0 and chi nu >= rho
///   y + (nu/rho)(chi a - mu b)        if rho > 0 and chi nu < rho
/// rho is snapped to zero when it is within rounding of zero relative to mu nu.
inline Vector haugazeau_q(const Vector& x, const Vector& y, const Vector& z) {
  detail::require_dimension(y.size(), x.size(), "haugazeau_q y");
  detail::require_dimension(z.size(), x.size(), "haugazeau_q z");
  Vector out(x.size());
  detail::haugazeau_q_into(x, y, z, out);
  return out;
}

namespace detail {

/// Fills `s` with a subgradient, in place when the constraint supports it.
template <LevelSetFunction C>
void subgradient_into(const C& phi, const Vector& p, Vector& s) {
  if constexpr (requires { phi.subgradient_into(p, s); }) {
    phi.subgradient_into(p, s);
  } else {
    s = phi.subgradient(p);
  }
}

/// Turns `half`, holding a subgradient s at p, into p + zeta s / |s|^2.
/// Returns false when s = 0.
inline bool finish_subgradient_step(const Vector& p, double zeta, Vector& half) {
  const double s2 = half.squaredNorm();
  if (s2 == 0.0) return false;
  half = p + (zeta / s2) * half;
  return true;
}

/// p + (eta - value) s / |s|^2 for a point strictly above the bound.
template <LevelSetFunction C>
std::optional<Vector> subgradient_step(const C& phi, const Vector& p, double value) {
  Vector half(p.size());
  subgradient_into(phi, p, half);
  if (!finish_subgradient_step(p, phi.bound() - value, half)) return std::nullopt;
  return half;
}

template <typename C>
bool any_origin_singleton(std::span<const C> constraints) {
  return std::any_of(constraints.begin(), constraints.end(),
                     [](const C& c) { return c.is_origin_singleton(); });
}

inline std::string infeasible_message(double value, double eta) {
  return "zero subgradient at a point with value " + std::to_string(value) + " above bound " +
         std::to_string(eta) + ": the level set is empty";
}

}  // namespace detail

/// Subgradient projection of p onto {phi <= eta}; p itself when p is feasible.
/// The result r satisfies {phi <= eta} ⊂ H(p, r).
template <LevelSetFunction C>
Vector subgradient_projection(const C& phi, const Vector& p) {
  const double value = phi.value(p);
  if (value <= phi.bound()) return p;
  auto stepped = detail::subgradient_step(phi, p, value);
  if (!stepped) throw InfeasibleConstraintError(detail::infeasible_message(value, phi.bound()));
  return *std::move(stepped);
}

/// Approximate Euclidean projection of p0 onto C = {phi <= eta} by outer
/// approximation. Each step projects p0 onto H(p0, p_k) ∩ H(p_k, p_{k+1/2}),
/// where p_{k+1/2} is the subgradient projection of p_k; both half-spaces
/// contain C, so |p0 - p_k| grows monotonically toward |p0 - P_C(p0)|.
///
/// `observer(k, p_k)` is called for every iterate, starting with p_0.
template <LevelSetFunction C, typename Observer = NoObserver>
ProjectionResult project_level_set(const C& phi, const Vector& p0, const ProjectionOptions& opts,
                                   Observer&& observer = {}) {
  if (opts.max_inner_iters < 1) throw DataError("max_inner_iters must be >= 1");
  const double eta = phi.bound();
  Vector p = p0;
  Vector half(p0.size());
  Vector next(p0.size());
  int k = 0;
  for (;;) {
    observer(k, p);
    const double value = phi.value(p);
    const double zeta = eta - value;
    const double violation = std::max(-zeta, 0.0);
    if (zeta >= 0.0) return {std::move(p), {ProjectionOutcome::FeasibleHit, k, 0.0}};
    if (zeta >= -opts.feasibility_tolerance) {
      return {std::move(p), {ProjectionOutcome::ToleranceMet, k, violation}};
    }
    if constexpr (requires { { phi.is_origin_singleton() } -> std::convertible_to<bool>; }) {
      if (phi.is_origin_singleton()) {
        return {Vector::Zero(p0.size()), {ProjectionOutcome::FeasibleHit, k + 1, 0.0}};
      }
    }
    if (k == opts.max_inner_iters) {
      return {std::move(p), {ProjectionOutcome::BudgetExhausted, k, violation}};
    }
    detail::subgradient_into(phi, p, half);
    if (!detail::finish_subgradient_step(p, zeta, half)) {
      return {std::move(p), {ProjectionOutcome::InfeasibleConstraint, k, violation}};
    }
    detail::haugazeau_q_into(p0, p, half, next);
    ++k;
    if (opts.distance_tolerance && (next - p).norm() <= *opts.distance_tolerance) {
      observer(k, next);
      const double v = std::max(phi.value(next) - eta, 0.0);
      const auto outcome = v == 0.0 ? ProjectionOutcome::FeasibleHit : ProjectionOutcome::ToleranceMet;
      return {std::move(next), {outcome, k, v}};
    }
    p.swap(next);
  }
}

/// Approximate projection of p0 onto the intersection of several level sets.
/// Per-constraint subgradient projections are averaged with `weights`
/// (each in ]0,1], summing to 1) and extrapolated by
///   L_k = sum_j w_j |p_jk - p_k|^2 / |sum_j w_j p_jk - p_k|^2
/// before the same two-half-space step as project_level_set. With a single
/// constraint the iterates coincide with project_level_set bit for bit.
template <LevelSetFunction C, typename Observer = NoObserver>
ProjectionResult project_level_set_multi(std::span<const C> constraints,
                                         std::span<const double> weights, const Vector& p0,
                                         const ProjectionOptions& opts, Observer&& observer = {}) {
  if (opts.max_inner_iters < 1) throw DataError("max_inner_iters must be >= 1");
  if (constraints.empty()) throw DataError("multi-constraint projection needs at least one constraint");
  if (weights.size() != constraints.size()) throw DataError("one weight per constraint is required");
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0 && w <= 1.0)) throw DataError("constraint weights must lie in ]0, 1]");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12 * static_cast<double>(weights.size())) {
    throw DataError("constraint weights must sum to 1");
  }

  const std::size_t count = constraints.size();
  std::vector<double> values(count);
  std::vector<Vector> stepped(count);
  Vector p = p0;
  int k = 0;
  for (;;) {
    observer(k, p);
    double zeta = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
      values[j] = constraints[j].value(p);
      zeta = std::min(zeta, constraints[j].bound() - values[j]);
    }
    const double violation = std::max(-zeta, 0.0);
    if (zeta >= 0.0) return {std::move(p), {ProjectionOutcome::FeasibleHit, k, 0.0}};
    if (zeta >= -opts.feasibility_tolerance) {
      return {std::move(p), {ProjectionOutcome::ToleranceMet, k, violation}};
    }
    if constexpr (requires(const C& c) { { c.is_origin_singleton() } -> std::convertible_to<bool>; }) {
      if (detail::any_origin_singleton(constraints)) {
        const Vector origin = Vector::Zero(p0.size());
        for (const auto& c : constraints) {
          if (c.value(origin) > c.bound()) {
            return {std::move(p), {ProjectionOutcome::InfeasibleConstraint, k, violation}};
          }
        }
        return {origin, {ProjectionOutcome::FeasibleHit, k + 1, 0.0}};
      }
    }
    if (k == opts.max_inner_iters) {
      return {std::move(p), {ProjectionOutcome::BudgetExhausted, k, violation}};
    }

    for (std::size_t j = 0; j < count; ++j) {
      if (values[j] <= constraints[j].bound()) {
        stepped[j] = p;
        continue;
      }
      auto half = detail::subgradient_step(constraints[j], p, values[j]);
      if (!half) return {std::move(p), {ProjectionOutcome::InfeasibleConstraint, k, violation}};
      stepped[j] = *std::move(half);
    }

    Vector average = weights[0] * stepped[0];
    double spread = weights[0] * (stepped[0] - p).squaredNorm();
    for (std::size_t j = 1; j < count; ++j) {
      average += weights[j] * stepped[j];
      spread += weights[j] * (stepped[j] - p).squaredNorm();
    }
    const Vector direction = average - p;
    const double denominator = direction.squaredNorm();
    if (spread == 0.0) {
      // Every step vanished in rounding; the violation is below resolution.
      return {std::move(p), {ProjectionOutcome::ToleranceMet, k, violation}};
    }
    if (denominator <= std::numeric_limits<double>::epsilon() * spread) {
      // The averaged steps cancel, which only happens when the sets are disjoint.
      return {std::move(p), {ProjectionOutcome::InfeasibleConstraint, k, violation}};
    }
    const double extrapolation = spread / denominator;
    // average + (L - 1)(average - p) equals p + L (average - p) and is exact when L = 1.
    const Vector half = average + (extrapolation - 1.0) * direction;
    Vector next = haugazeau_q(p0, p, half);
    ++k;
    if (opts.distance_tolerance && (next - p).norm() <= *opts.distance_tolerance) {
      observer(k, next);
      double v = 0.0;
      for (const auto& c : constraints) v = std::max(v, c.value(next) - c.bound());
      const auto outcome = v == 0.0 ? ProjectionOutcome::FeasibleHit : ProjectionOutcome::ToleranceMet;
      return {std::move(next), {outcome, k, v}};
    }
    p = std::move(next);
  }
}

}  // namespace outerproj
