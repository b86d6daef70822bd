#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cprec::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // usage errors and anything not listed below
  kBadInput = 2,  // missing producer or malformed record
  kEmptyAfterFilter = 3,
  kNonFiniteLoss = 4,
  kDimensionMismatch = 5,
  kNotReproducible = 6,  // replay found changed inputs or differing outputs
  kIoError = 7,
};

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cprec::cli
