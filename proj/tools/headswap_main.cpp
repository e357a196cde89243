#include "headswap/pipeline/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return headswap::cli_main(argc, argv, std::cout, std::cerr); }
