#include <iostream>

#include "irpert/harness/cli.hpp"

int main(int argc, char** argv) { return irpert::run_cli(argc, argv, std::cout, std::cerr); }
