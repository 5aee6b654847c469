#include <iostream>

#include "kbforge/cli/pipeline.hpp"

int main(int argc, char** argv) { return kbforge::cli::runCli(argc, argv, std::cout, std::cerr); }
