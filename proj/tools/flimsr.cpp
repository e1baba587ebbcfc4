#include <iostream>

#include "flimsr/cli.hpp"

int main(int argc, char** argv) { return flimsr::cli::dispatch(argc, argv, std::cout, std::cerr); }
