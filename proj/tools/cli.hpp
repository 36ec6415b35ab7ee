/**
 * The hstf command-line front end.
 *
 * Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input,
 * 3 write failure, 4 single-class dataset, 5 model/config mismatch.
 */

#ifndef HSTF_TOOLS_CLI_HPP
#define HSTF_TOOLS_CLI_HPP

#include <iosfwd>

namespace hstf::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kBadInput = 2,
  kWriteFailure = 3,
  kSingleClass = 4,
  kMismatch = 5,
};

/** Runs one command line; results go to `out`, progress and diagnostics to `err`. */
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hstf::cli

#endif  // HSTF_TOOLS_CLI_HPP
