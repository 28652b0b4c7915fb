#pragma once

// The `collapse` command line, callable in-process for testing.
//
//   collapse scenarios list
//   collapse scenarios run <name|all> [--json PATH] [--csv PATH] [--seed N]
//   collapse check --config PATH [--json PATH] [--csv PATH]
//   collapse measure --config PATH --at x[,y][,w] [--measure M] [--json PATH]
//   collapse regress --family F --n N --seed S [--gamma G] [--theta T] [--json PATH]
//
// Exit codes: 0 every check passed, 1 a check failed, 2 usage or config
// error, 3 a numerical failure left a check indeterminate.

#include <iosfwd>
#include <string>
#include <vector>

#include "collapse/errors.hpp"
#include "collapse/scenarios.hpp"

namespace collapse {

inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

int exit_code(CheckStatus status);
int exit_code(ErrorKind kind);

/// `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace collapse
