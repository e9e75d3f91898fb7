#include <string>
#include <vector>

#include "sparsemask/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sparsemask::cli::dispatch(args);
}
