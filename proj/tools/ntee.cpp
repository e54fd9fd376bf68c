#include <iostream>

#include "ntee/cli.hpp"

int main(int argc, char** argv) { return ntee::cli::run(argc, argv, std::cout, std::cerr); }
