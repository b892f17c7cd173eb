#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cosinor::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kNumericalFailure = 3,
};

/// Run the command line `args` (without the program name), writing results to
/// `out` when no output file is given and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cosinor::cli
