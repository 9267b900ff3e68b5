// SPDX-License-Identifier: Apache-2.0

#include "fedforget/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fedforget::cli_main(argc, argv, std::cout, std::cerr); }
