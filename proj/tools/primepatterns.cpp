#include <iostream>

#include "primepatterns/cli.hpp"

int main(int argc, char** argv) { return primepatterns::cli::run(argc, argv, std::cout, std::cerr); }
