#pragma once

#include <string>
#include <vector>

namespace pamimpute::cli {

/// Runs one command line (args exclude the program name) and returns the
/// process exit status. Errors are reported on stderr as a single line:
///   error: kind=<kind> code=<status> message=<text>
int run(const std::vector<std::string>& args);

}  // namespace pamimpute::cli
