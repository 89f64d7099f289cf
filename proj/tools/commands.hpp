#pragma once

#include <iosfwd>

namespace dsmpc::cli {

enum ExitCode : int {
    kSuccess = 0,
    kFailure = 1,     // infeasible closed loop or failed check
    kInputError = 2,  // bad arguments, files or models
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dsmpc::cli
