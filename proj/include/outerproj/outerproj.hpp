#pragma once

#include "outerproj/constraints.hpp"
#include "outerproj/data.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/io.hpp"
#include "outerproj/metrics.hpp"
#include "outerproj/model.hpp"
#include "outerproj/projection.hpp"
#include "outerproj/random.hpp"
#include "outerproj/solver.hpp"

namespace outerproj {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace outerproj
