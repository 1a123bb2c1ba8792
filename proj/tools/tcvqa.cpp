#include <iostream>

#include "tcvqa/cli.hpp"

int main(int argc, char** argv) { return tcv::cli_main(argc, argv, std::cout, std::cerr); }
