#include <vector>

#include "invbasin/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return invbasin::run_command(args);
}
