#pragma once

#include <string>
#include <vector>

namespace kslab::cli {

/// Dispatch a full argv (without the program name). Returns the process exit
/// code: 0 success, 1 usage error, 2 runtime error.
int run(const std::vector<std::string>& args);

} // namespace kslab::cli
