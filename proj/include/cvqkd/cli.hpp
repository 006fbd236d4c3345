#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cvqkd {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSecurityAbort = 3;
inline constexpr int kExitStatisticalFailure = 4;

/// Run the command-line interface on an argv-style argument list (without the
/// program name). Primary output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace cvqkd
