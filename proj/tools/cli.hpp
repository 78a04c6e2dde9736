#pragma once

#include <iosfwd>

namespace hierreconc::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInvalidInput = 2,
  kAllZeroWeights = 3,
};

/// Runs the hier-reconc command line. Output goes to `out`, diagnostics to
/// `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hierreconc::cli
