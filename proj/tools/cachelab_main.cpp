#include <iostream>

#include "cachelab/cli.hpp"

int main(int argc, char** argv) {
  return cachelab::run_cli(argc, argv, std::cin, std::cout, std::cerr);
}
