#include <iostream>

#include "tirbench/cli.hpp"

int main(int argc, char** argv) { return tirbench::run_cli(argc, argv, std::cout, std::cerr); }
