#include "rrst/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return rrst::run_cli(argc, argv, std::cout, std::cerr); }
