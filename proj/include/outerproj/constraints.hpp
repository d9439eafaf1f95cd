#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"

namespace outerproj {

/// A convex function together with the bound eta defining the lower level
/// set {w : value(w) <= eta}. Anything modelling this can be projected onto.
template <typename C>
concept LevelSetFunction = requires(const C& c, const Vector& w) {
  { c.value(w) } -> std::convertible_to<double>;
  { c.subgradient(w) } -> std::convertible_to<Vector>;
  { c.bound() } -> std::convertible_to<double>;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  /// +1 when both endpoints act in the same direction, -1 otherwise.
  int sign = 1;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Ordered edge list over feature indices 0..dim-1.
class FeatureGraph {
 public:
  FeatureGraph(std::size_t dim, std::vector<Edge> edges) : dim_(dim), edges_(std::move(edges)) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& edge = edges_[e];
      const std::string where = "edge " + std::to_string(e) + " (" + std::to_string(edge.from) +
                                ", " + std::to_string(edge.to) + ")";
      if (edge.from >= dim_ || edge.to >= dim_) {
        throw DataError(where + ": index out of range for d = " + std::to_string(dim_));
      }
      if (edge.from == edge.to) throw DataError(where + ": self loop");
      if (edge.sign != 1 && edge.sign != -1) throw DataError(where + ": sign must be +1 or -1");
      if (!seen.emplace(edge.from, edge.to).second) throw DataError(where + ": duplicate edge");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  /// Same topology with every sign reset to +1.
  FeatureGraph unsigned_copy() const {
    std::vector<Edge> plain = edges_;
    for (auto& e : plain) e.sign = 1;
    return FeatureGraph(dim_, std::move(plain));
  }

 private:
  std::size_t dim_;
  std::vector<Edge> edges_;
};

enum class ConstraintKind {
  L1,                  ///< sum_i |w_i|
  PairwiseMax,         ///< sum_edges max(|w_i|, |w_j|)
  PairwiseDiff,        ///< sum_edges |w_i - w_j|
  SignedPairwiseDiff,  ///< sum_edges |w_i - a_ij w_j|
};

namespace detail {
constexpr double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

/// One of the four sparsity/grouping functionals with its bound eta >= 0.
/// The graph is shared and immutable, so copies are cheap.
class ConstraintSpec {
 public:
  static ConstraintSpec l1(double eta) { return ConstraintSpec(ConstraintKind::L1, nullptr, eta); }

  static ConstraintSpec with_graph(ConstraintKind kind, std::shared_ptr<const FeatureGraph> graph,
                                   double eta) {
    if (kind != ConstraintKind::L1 && !graph) {
      throw DataError("pairwise constraints need a feature graph");
    }
    return ConstraintSpec(kind, std::move(graph), eta);
  }

  static ConstraintSpec with_graph(ConstraintKind kind, FeatureGraph graph, double eta) {
    return with_graph(kind, std::make_shared<const FeatureGraph>(std::move(graph)), eta);
  }

  ConstraintKind kind() const noexcept { return kind_; }
  double bound() const noexcept { return eta_; }
  const std::shared_ptr<const FeatureGraph>& graph() const noexcept { return graph_; }

  ConstraintSpec with_bound(double eta) const { return ConstraintSpec(kind_, graph_, eta); }

  double value(const Vector& w) const {
    check(w);
    if (kind_ == ConstraintKind::L1) return w.lpNorm<1>();
    double total = 0.0;
    for (const Edge& e : graph_->edges()) {
      const double wi = w[static_cast<Eigen::Index>(e.from)];
      const double wj = w[static_cast<Eigen::Index>(e.to)];
      switch (kind_) {
        case ConstraintKind::PairwiseMax:
          total += std::max(std::abs(wi), std::abs(wj));
          break;
        case ConstraintKind::PairwiseDiff:
          total += std::abs(wi - wj);
          break;
        case ConstraintKind::SignedPairwiseDiff:
          total += std::abs(wi - e.sign * wj);
          break;
        case ConstraintKind::L1:
          break;
      }
    }
    return total;
  }

  /// An element of the subdifferential at w, accumulated edge by edge.
  /// At a nonzero tie |w_i| = |w_j| the pairwise max contributes half of
  /// each endpoint's sign, which keeps the result a valid subgradient.
  Vector subgradient(const Vector& w) const {
    Vector s(w.size());
    subgradient_into(w, s);
    return s;
  }

  /// subgradient() written into a caller-owned buffer.
  void subgradient_into(const Vector& w, Vector& s) const {
    check(w);
    if (kind_ == ConstraintKind::L1) {
      s = w.unaryExpr([](double x) { return detail::sign(x); });
      return;
    }
    s.setZero(w.size());
    for (const Edge& e : graph_->edges()) {
      const auto i = static_cast<Eigen::Index>(e.from);
      const auto j = static_cast<Eigen::Index>(e.to);
      switch (kind_) {
        case ConstraintKind::PairwiseMax: {
          const double ai = std::abs(w[i]);
          const double aj = std::abs(w[j]);
          if (ai > aj) {
            s[i] += detail::sign(w[i]);
          } else if (aj > ai) {
            s[j] += detail::sign(w[j]);
          } else {
            s[i] += 0.5 * detail::sign(w[i]);
            s[j] += 0.5 * detail::sign(w[j]);
          }
          break;
        }
        case ConstraintKind::PairwiseDiff: {
          const double g = detail::sign(w[i] - w[j]);
          s[i] += g;
          s[j] -= g;
          break;
        }
        case ConstraintKind::SignedPairwiseDiff: {
          const double g = detail::sign(w[i] - e.sign * w[j]);
          s[i] += g;
          s[j] -= e.sign * g;
          break;
        }
        case ConstraintKind::L1:
          break;
      }
    }
  }

  /// True when the level set is {0}. Outer approximation only reaches that
  /// point in the limit, so projections short-circuit to it.
  bool is_origin_singleton() const noexcept { return kind_ == ConstraintKind::L1 && eta_ == 0.0; }

 private:
  ConstraintSpec(ConstraintKind kind, std::shared_ptr<const FeatureGraph> graph, double eta)
      : kind_(kind), graph_(std::move(graph)), eta_(eta) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
      throw DataError("constraint bound eta must be finite and >= 0");
    }
  }

  void check(const Vector& w) const {
    if (graph_) {
      detail::require_dimension(w.size(), static_cast<Eigen::Index>(graph_->dim()), "constraint");
    }
  }

  ConstraintKind kind_;
  std::shared_ptr<const FeatureGraph> graph_;
  double eta_;
};

static_assert(LevelSetFunction<ConstraintSpec>);

inline ConstraintKind parse_constraint_kind(const std::string& name) {
  if (name == "l1") return ConstraintKind::L1;
  if (name == "pairmax") return ConstraintKind::PairwiseMax;
  if (name == "pairdiff") return ConstraintKind::PairwiseDiff;
  if (name == "signed") return ConstraintKind::SignedPairwiseDiff;
  throw DataError("unknown constraint '" + name + "' (expected l1, pairmax, pairdiff, signed)");
}

inline const char* constraint_kind_name(ConstraintKind kind) noexcept {
  switch (kind) {
    case ConstraintKind::L1: return "l1";
    case ConstraintKind::PairwiseMax: return "pairmax";
    case ConstraintKind::PairwiseDiff: return "pairdiff";
    case ConstraintKind::SignedPairwiseDiff: return "signed";
  }
  return "?";
}

}  // namespace outerproj
