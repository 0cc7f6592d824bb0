// Command-line front end. run_cli is the whole program minus process setup so
// tests can drive it in-process.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace letr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace letr::cli
