#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lrqk::tools {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  ///< I/O or numerical failure
inline constexpr int kExitUsage = 2;

/// Runs the lrqk command line; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count for head fan-out: LRQK_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count(std::size_t jobs);

}  // namespace lrqk::tools
