#include <iostream>
#include <string>
#include <vector>

#include "trajsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return trajsim::cli_dispatch(args, std::cout, std::cerr);
}
