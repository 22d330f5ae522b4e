#pragma once

#include <iosfwd>

namespace levyshell::cli {

// Exit codes of the levyshell tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitInconclusive = 4;

// Full command-line entry point. Errors go to `err` as one JSON object.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace levyshell::cli
