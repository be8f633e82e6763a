// Command-line surface. Subcommands: generate, train-inverse, ubl,
// train-forward, evaluate, robustness-sweep, report. Exit codes: 0 success,
// 1 validation error (usage, config, data), 2 runtime failure (divergence,
// I/O). INVERSE_BASIN_THREADS caps worker parallelism.

#pragma once

#include <string>
#include <vector>

namespace invbasin {

// argv without the program name.
int run_command(const std::vector<std::string>& args);

}  // namespace invbasin
