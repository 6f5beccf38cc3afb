#include <iostream>

#include "ldiag/cli.hpp"

int main(int argc, char** argv) { return ldiag::run_cli(argc, argv, std::cout, std::cerr); }
