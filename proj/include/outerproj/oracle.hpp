#pragma once

// Reference computations used to check the production paths. Nothing in the
// solver or projection code depends on this header.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "outerproj/constraints.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"

namespace outerproj::oracle {

enum class Method { SortThreshold, HalfSpaceEnumeration, GridSearch, FiniteDifference, ReferenceSolve };

inline const char* method_name(Method m) noexcept {
  switch (m) {
    case Method::SortThreshold: return "sort-threshold";
    case Method::HalfSpaceEnumeration: return "half-space-enumeration";
    case Method::GridSearch: return "grid-search";
    case Method::FiniteDifference: return "finite-difference";
    case Method::ReferenceSolve: return "reference-solve";
  }
  return "?";
}

struct Report {
  std::variant<double, Vector> reference;
  Method method;
  double tolerance_used;
};

/// Exact Euclidean projection onto {|w|_1 <= eta}: sort |v| in decreasing
/// order, find the threshold tau with sum max(|v_i| - tau, 0) = eta and
/// soft-threshold.
inline Vector l1_ball_projection_exact(const Vector& v, double eta) {
  if (!(eta >= 0.0)) throw DataError("l1 ball radius must be >= 0");
  if (v.lpNorm<1>() <= eta) return v;
  if (eta == 0.0) return Vector::Zero(v.size());
  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(mags.begin(), mags.end(), std::greater<>{});
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumulative += mags[k];
    const double candidate = (cumulative - eta) / static_cast<double>(k + 1);
    if (k + 1 == mags.size() || mags[k + 1] <= candidate) {
      tau = candidate;
      break;
    }
  }
  return v.unaryExpr([tau](double x) {
    const double shrunk = std::abs(x) - tau;
    return shrunk > 0.0 ? std::copysign(shrunk, x) : 0.0;
  });
}

/// {p : <normal, p> <= offset}
struct HalfSpace {
  Vector normal;
  double offset = 0.0;

  /// H(x,y) = {p : <p - y, x - y> <= 0}; nullopt when x == y (whole space).
  static std::optional<HalfSpace> through(const Vector& x, const Vector& y) {
    Vector n = x - y;
    if (n.squaredNorm() == 0.0) return std::nullopt;
    const double offset = n.dot(y);
    return HalfSpace{std::move(n), offset};
  }

  double excess(const Vector& p) const { return normal.dot(p) - offset; }
};

/// Projection of p0 onto the intersection of at most two half-spaces by
/// enumerating the active sets {}, {1}, {2}, {1,2} and keeping the nearest
/// feasible KKT candidate. Throws DataError when the intersection is empty.
inline Vector project_onto_halfspaces(std::span<const HalfSpace> spaces, const Vector& p0) {
  if (spaces.size() > 2) throw DataError("half-space oracle handles at most two half-spaces");
  const double scale = 1.0 + p0.norm();
  auto feasible = [&](const Vector& p) {
    for (const auto& h : spaces) {
      if (h.excess(p) > 1e-12 * (std::abs(h.offset) + h.normal.norm() * (scale + p.norm()))) return false;
    }
    return true;
  };

  std::vector<Vector> candidates{p0};
  for (const auto& h : spaces) {
    candidates.push_back(p0 - (h.excess(p0) / h.normal.squaredNorm()) * h.normal);
  }
  if (spaces.size() == 2) {
    const auto& h1 = spaces[0];
    const auto& h2 = spaces[1];
    Eigen::Matrix2d gram;
    gram << h1.normal.squaredNorm(), h1.normal.dot(h2.normal), h1.normal.dot(h2.normal),
        h2.normal.squaredNorm();
    const double det = gram.determinant();
    if (std::abs(det) > 1e-14 * gram(0, 0) * gram(1, 1)) {
      const Eigen::Vector2d rhs(h1.excess(p0), h2.excess(p0));
      const Eigen::Vector2d lambda = gram.inverse() * rhs;
      candidates.push_back(p0 - lambda[0] * h1.normal - lambda[1] * h2.normal);
    }
  }

  std::optional<Vector> best;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (!feasible(c)) continue;
    const double distance = (c - p0).squaredNorm();
    if (distance < best_distance) {
      best_distance = distance;
      best = c;
    }
  }
  if (!best) throw DataError("half-space oracle: empty intersection");
  return *best;
}

/// Brute-force projection onto a level set in dimension <= 3: evaluate on a
/// regular grid over the box |p_i| <= 2|p0|, then repeatedly zoom in around
/// the best feasible node until the grid step drops below `tolerance`.
template <LevelSetFunction C>
Vector grid_projection(const C& phi, const Vector& p0, double tolerance = 1e-7,
                       int points_per_axis = 0) {
  const auto d = static_cast<int>(p0.size());
  if (d < 1 || d > 3) throw DataError("grid oracle supports dimension 1 to 3");
  if (points_per_axis <= 0) points_per_axis = d <= 2 ? 2001 : 201;
  if (phi.value(p0) <= phi.bound()) return p0;

  Vector center = Vector::Zero(d);
  double half_width = 2.0 * std::max(p0.norm(), 1e-12);
  int n = points_per_axis;
  std::optional<Vector> best;
  for (;;) {
    const double step = 2.0 * half_width / (n - 1);
    double best_distance = std::numeric_limits<double>::infinity();
    std::optional<Vector> level_best;
    std::vector<int> index(static_cast<std::size_t>(d), 0);
    Vector q(d);
    for (;;) {
      for (int a = 0; a < d; ++a) q[a] = center[a] - half_width + step * index[static_cast<std::size_t>(a)];
      if (phi.value(q) <= phi.bound()) {
        const double distance = (q - p0).squaredNorm();
        if (distance < best_distance) {
          best_distance = distance;
          level_best = q;
        }
      }
      int a = 0;
      while (a < d && ++index[static_cast<std::size_t>(a)] == n) index[static_cast<std::size_t>(a++)] = 0;
      if (a == d) break;
    }
    if (!level_best) {
      if (!best) throw DataError("grid oracle: no feasible grid point");
      return *best;
    }
    best = level_best;
    if (step <= tolerance) return *best;
    center = *best;
    half_width = 4.0 * step;
    n = 41;
  }
}

/// Central differences, one coordinate at a time.
inline Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                         const Vector& w, double h) {
  if (!(h > 0.0)) throw DataError("finite-difference step must be positive");
  Vector g(w.size());
  Vector probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = f(probe);
    probe[i] = original - h;
    const double down = f(probe);
    probe[i] = original;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Projected gradient with the exact l1-ball projection and gamma = 1/beta,
/// run for exactly `iterations` steps from zero.
inline Vector reference_solve(const RiskModel& model, double eta, int iterations) {
  if (iterations < 0) throw DataError("iteration count must be >= 0");
  const double gamma = 1.0 / model.lipschitz_bound();
  Vector w = Vector::Zero(model.dim());
  for (int n = 0; n < iterations; ++n) {
    w = l1_ball_projection_exact(w - gamma * model.gradient(w), eta);
  }
  return w;
}

}  // namespace outerproj::oracle
