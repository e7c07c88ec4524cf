// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "trams/cli_io.hpp"

int main(int argc, char** argv) { return trams::run_cli(argc, argv, std::cout, std::cerr); }
