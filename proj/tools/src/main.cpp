#include <iostream>
#include <string>
#include <vector>

#include "pavepci/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pavepci::cli::run_cli(args, std::cout, std::cerr);
}
