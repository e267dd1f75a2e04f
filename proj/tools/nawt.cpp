#include <iostream>

#include "nawt/cli.hpp"

int main(int argc, char** argv) { return nawt::cli::run(argc, argv, std::cout, std::cerr); }
