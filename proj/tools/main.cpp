#include <iostream>

#include "domino/cli.hpp"

int main(int argc, char** argv) { return domino::run_cli(argc, argv, std::cout, std::cerr); }
