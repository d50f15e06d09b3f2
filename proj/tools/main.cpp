#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  return dphi::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
