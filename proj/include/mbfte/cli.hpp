#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbfte {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs the tool with `args` (without the program name). Messages come from
// `in`; results go to `out` and diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace mbfte
