#pragma once

#include <iosfwd>

namespace iqs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point for the `iqs` command. Machine-readable output goes to `out`,
/// diagnostics and human-readable tables to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iqs::cli
