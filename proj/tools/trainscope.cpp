// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "trainscope/cli.hpp"

int main(int argc, char** argv) {
  return trainscope::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
