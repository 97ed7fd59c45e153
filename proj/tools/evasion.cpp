#include <iostream>
#include <string>
#include <vector>

#include "evasion/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return evasion::cli::run(args, std::cout, std::cerr);
}
