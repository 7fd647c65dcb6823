#pragma once

#include <string>
#include <vector>

namespace rewire {

/// Entry point behind the `rewire` binary. `args` excludes the program name.
/// Returns 0 on success, 1 on usage errors, 2 on runtime failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace rewire
