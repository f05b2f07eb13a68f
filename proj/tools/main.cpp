// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return mcrdl::cli::main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
