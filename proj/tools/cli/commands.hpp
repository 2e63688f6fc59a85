#pragma once

#include <iosfwd>

namespace abundance::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitInput = 2;

/// Parses the arguments, runs the selected subcommand and returns the exit
/// code. Diagnostics go to `err`, short results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace abundance::cli
