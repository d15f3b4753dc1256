#include <iostream>
#include <string>
#include <vector>

#include "tox2/cli.hpp"

int main(int argc, char** argv) {
  return tox2::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
