#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace relrep {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one subcommand. Exit status: 0 success, 1 validation error (including
/// bad usage), 2 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace relrep
