#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ecgdx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs `ecgdx` with `args` (program name excluded). Regular output goes to
/// `out`; usage errors and logs go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecgdx::cli
