#include "hfgn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hfgn::cli_main(argc, argv, std::cout, std::cerr); }
