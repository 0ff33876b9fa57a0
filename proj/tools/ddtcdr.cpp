#include <iostream>

#include "ddtcdr/cli.hpp"

int main(int argc, char** argv) { return ddtcdr::run_cli(argc, argv, std::cout, std::cerr); }
