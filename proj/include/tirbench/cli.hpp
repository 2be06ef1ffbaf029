#pragma once

#include <iosfwd>

namespace tirbench {

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Entry point of the `tirbench` command line: gen, run, score, curve,
/// attribute and report. Never throws; errors become messages on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tirbench
