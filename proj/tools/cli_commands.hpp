#pragma once

// Subcommands of the `neat` executable. Each returns a process exit code.

#include <iosfwd>
#include <string>
#include <vector>

namespace neat::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

/// Parses `args` (without the program name) and runs the selected subcommand. Errors are
/// reported on `err` and mapped to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace neat::cli
