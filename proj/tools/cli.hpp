#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace outerproj::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kUsageError = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "OUTERPROJ_OUT_DIR";

/// Runs one command line (without the program name) and returns its exit
/// code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace outerproj::cli
