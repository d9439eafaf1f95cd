#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace outerproj {

/// Inputs with incompatible shapes (vector length vs. feature dimension).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed data, graph, or configuration supplied by the caller.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The constraint has a zero subgradient at a point strictly above its
/// bound, so its lower level set is empty.
class InfeasibleConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// H(x,y) and H(y,z) do not intersect. Only reachable through a logic
/// error in the caller since the projection loops build nested half-spaces.
class InconsistentHalfSpacesError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A risk value or gradient became non-finite during a solve.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

namespace detail {

inline void require_dimension(std::ptrdiff_t got, std::ptrdiff_t expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

}  // namespace detail
}  // namespace outerproj
