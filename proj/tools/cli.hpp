#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one command line (args excludes the program name). Normal output goes
/// to `out`, diagnostics and per-epoch log lines to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tl::cli
