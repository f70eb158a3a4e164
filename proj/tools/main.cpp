#include <iostream>

#include "weakmcn/harness/cli.hpp"

int main(int argc, char** argv) { return weakmcn::harness::run_cli(argc, argv, std::cout, std::cerr); }
