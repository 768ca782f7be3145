#include <iostream>

#include "segcurate/cli.hpp"

int main(int argc, char** argv) { return segcurate::run_cli(argc, argv, std::cout, std::cerr); }
