#include <iostream>
#include <string>
#include <vector>

#include "perfest/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return perfest::dispatch(args, std::cout, std::cerr);
}
