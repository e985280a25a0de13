#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mvsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one CLI invocation; `args` excludes the program name. Returns the
/// process exit code (0 success, 2 usage/config error, 3 runtime failure).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvsa::cli
