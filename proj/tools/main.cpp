#include <iostream>

#include "blastoseg/cli.hpp"

int main(int argc, char** argv) { return blastoseg::cli::run(argc, argv, std::cout, std::cerr); }
