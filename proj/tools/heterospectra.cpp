#include "heterospectra/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return heterospectra::cli::run(argc, argv, std::cout, std::cerr);
}
