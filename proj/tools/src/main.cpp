#include <iostream>

#include "declare/cli/cli.hpp"

int main(int argc, char** argv) { return declare::cli::run(argc, argv, std::cout, std::cerr); }
