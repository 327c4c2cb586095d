#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace remaster {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs the `remasterkit` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on usage errors and 2 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace remaster
