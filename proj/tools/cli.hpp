#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace puppetrack {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitMalformedInput = 2,
  kExitTrackingFailure = 3,
};

/// Entry point of the puppetrack command; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace puppetrack
