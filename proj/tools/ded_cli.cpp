#include "ded/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ded::run_cli(args, std::cerr);
}
