// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cflow_cli/cli.hpp"

int main(int argc, char** argv) { return cflow::cli::run(argc, argv, std::cout, std::cerr); }
