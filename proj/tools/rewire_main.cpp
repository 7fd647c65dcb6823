#include <vector>

#include "rewire/cli.hpp"

int main(int argc, char** argv) {
  return rewire::run_cli({argv + 1, argv + argc});
}
