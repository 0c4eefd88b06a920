#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csvqr::cli {

/// Exit statuses of the csvqr binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Parses argv (program name first) and runs one of the ingest, features,
/// fit, predict, evaluate or backtest subcommands. Summaries go to out,
/// warnings and diagnostics to err.
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace csvqr::cli
