#include <iostream>
#include <string>
#include <vector>

#include "artrack/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return artrack::run_cli(args, std::cout, std::cerr);
}
