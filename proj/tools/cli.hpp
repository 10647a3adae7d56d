#pragma once

#include <string>
#include <vector>

namespace docsim::cli {

// Full command-line surface; returns the process exit code.
// 0 = success, 1 = validation/configuration error, 2 = runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace docsim::cli
