#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace safsar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `safsar` executable. `args` excludes the program name.
/// Returns 0 on success, 1 on a domain failure, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace safsar::cli
