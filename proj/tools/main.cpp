#include <iostream>
#include <string>
#include <vector>

#include "usermodel/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return usermodel::cli::run(args, std::cout, std::cerr);
}
