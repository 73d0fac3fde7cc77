#include <string>
#include <vector>

#include "shadowsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return shadowsim::run_cli(std::move(args));
}
