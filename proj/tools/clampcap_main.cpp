#include <iostream>

#include "clampcap/app/cli.hpp"

int main(int argc, char** argv) {
  clampcap::app::configure_logging();
  return clampcap::app::run_cli(argc, argv, std::cout, std::cerr);
}
