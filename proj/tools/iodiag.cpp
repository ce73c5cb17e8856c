// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "iodiag/cli.hpp"

int main(int argc, char** argv) {
  return iodiag::run_cli(argc, argv, std::cout, std::cerr);
}
