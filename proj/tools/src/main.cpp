#include <iostream>

#include "multiattn_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return multiattn::cli::run(args, std::cout, std::cerr);
}
