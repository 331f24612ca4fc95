#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace hydra::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `hydra` invocation. `args` excludes the program name. Reports go
/// to `out`; diagnostics and the seed echo go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace hydra::cli
