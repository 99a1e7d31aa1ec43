#include <iostream>

#include "smclab/cli.hpp"

int main(int argc, char** argv) { return smclab::cli::run_cli(argc, argv, std::cout, std::cerr); }
