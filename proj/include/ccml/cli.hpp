#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccml {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

// Entry point for the `ccml` tool. `args` excludes the program name.
// Subcommands: generate, corrupt, train, eval, experiment.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ccml
