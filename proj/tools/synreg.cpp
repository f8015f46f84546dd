#include <iostream>

#include "synreg/cli.hpp"

int main(int argc, char** argv) { return synreg::run_cli(argc, argv, std::cout, std::cerr); }
