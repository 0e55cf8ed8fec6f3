#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uqf::cli {

enum ExitCode : int { ok = 0, config_error = 2, data_error = 3, missing_data = 4 };

/// Runs the `uqf` command line. `args` excludes the program name. Output and
/// diagnostics go to the given streams; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uqf::cli
