#include <iostream>

#include "fedmix/cli.hpp"

int main(int argc, char** argv) { return fedmix::run_cli(argc, argv, std::cout, std::cerr); }
