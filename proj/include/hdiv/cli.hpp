#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdiv::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kInputError = 2,
    kWeakIdentification = 3,
    kNonConvergence = 4,
};

// Entry point of the `hdiv` tool. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hdiv::cli
