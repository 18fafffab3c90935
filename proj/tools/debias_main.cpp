#include <string>
#include <vector>

#include "debias/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return debias::cli::run(args);
}
