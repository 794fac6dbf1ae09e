#include <iostream>

#include "herln/cli.hpp"

int main(int argc, char** argv) { return herln::run_cli(argc, argv, std::cout, std::cerr); }
