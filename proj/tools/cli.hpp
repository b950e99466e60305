#pragma once

#include <iosfwd>

namespace ecgl::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
};

/// Entry point of the ecgl command line: run, gen, bench, validate.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ecgl::cli
