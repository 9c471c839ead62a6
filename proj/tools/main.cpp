#include <string>
#include <vector>

#include "ossem/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ossem::run_cli(args);
}
