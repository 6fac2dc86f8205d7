#include <iostream>

#include "ick/cli.hpp"

int main(int argc, char** argv) { return ick::cli_main(argc, argv, std::cout, std::cerr); }
