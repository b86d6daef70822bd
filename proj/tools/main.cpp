#include <iostream>

#include "cprec/cli.hpp"

int main(int argc, char** argv) {
  return cprec::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
