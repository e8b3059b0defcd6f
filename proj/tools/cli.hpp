#pragma once

#include <string>
#include <vector>

namespace sefc::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime or per-file failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace sefc::cli
