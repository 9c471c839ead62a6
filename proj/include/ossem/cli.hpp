#pragma once

#include <string>
#include <vector>

namespace ossem {

// Full command-line driver. Returns the process exit code; never throws.
int run_cli(const std::vector<std::string>& args);

}  // namespace ossem
