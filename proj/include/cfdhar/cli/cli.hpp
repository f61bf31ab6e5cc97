// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cfdhar/eval/evaluation.hpp"

namespace cfdhar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Mask sweeps put masks in columns with Activity and Identity as the first
// two rows; weight sweeps put one grid weight per row.
void print_summary(const eval::SweepResult& result, std::ostream& out);

}  // namespace cfdhar::cli
