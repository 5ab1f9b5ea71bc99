#include <iostream>

#include "shapesel/cli.hpp"

int main(int argc, char** argv) { return shapesel::cli::run(argc, argv, std::cout, std::cerr); }
