// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trainscope/problems.hpp"
#include "trainscope/quantities.hpp"

namespace trainscope {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program and subcommand names.
int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_render(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_bench(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Dispatches on argv[1] (train, render or bench).
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Parses "exact" or "mc:<samples>". Throws ConfigError otherwise.
CurvatureOptions parse_curvature(const std::string& spec);

}  // namespace trainscope
