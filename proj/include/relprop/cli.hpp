#pragma once

#include <string>
#include <vector>

namespace relprop::cli {

/// Entry point of the `relprop` binary. Returns the process exit status;
/// errors are reported on standard error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace relprop::cli
