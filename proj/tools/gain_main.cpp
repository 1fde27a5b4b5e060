#include <iostream>

#include "gain/cli.hpp"

int main(int argc, char** argv) { return gain::run_cli(argc, argv, std::cout, std::cerr); }
