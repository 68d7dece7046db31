#include <iostream>

#include "vsdoa/cli.hpp"

int main(int argc, char** argv) { return vsdoa::cli::run(argc, argv, std::cout, std::cerr); }
