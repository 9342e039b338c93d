#include <iostream>

#include "fedsdd/cli.h"

int main(int argc, char** argv) {
  return fedsdd::cli::run_cli(argc, argv, std::cout, std::cerr);
}
