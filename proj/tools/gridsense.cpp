#include <iostream>
#include <string>
#include <vector>

#include "gridsense/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gridsense::cli::run_cli(args, std::cout, std::cerr);
}
