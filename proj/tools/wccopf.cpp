#include <iostream>

#include "wccopf/cli.hpp"

int main(int argc, char** argv) { return wccopf::run_cli(argc, argv, std::cout, std::cerr); }
