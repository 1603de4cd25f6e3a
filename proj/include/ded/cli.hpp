#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ded {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

// Parses argv (including the program name) and runs one subcommand. All
// human-readable output goes to `err`; results go to files.
int run_cli(const std::vector<std::string>& args, std::ostream& err);

}  // namespace ded
