#include <iostream>
#include <string>
#include <vector>

#include "sbsim/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sbsim::RunCli(args, std::cout, std::cerr);
}
