#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace featforge::cli {

// Shared entry point for the binary and the tests. `args` is the command
// line without the program name. Errors never escape: they print to `err`
// and map to the exit code (0 success, 1 internal, 2 configuration,
// 3 data).
int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err);

}  // namespace featforge::cli
