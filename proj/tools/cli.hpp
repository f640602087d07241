#pragma once

#include <ostream>

namespace degsde::cli {

enum ExitCode : int { kOk = 0, kVerdictFailure = 1, kUsage = 2, kNumerical = 3 };

/// Parses argv, runs one subcommand and writes its outputs. Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace degsde::cli
