#pragma once

#include <string>
#include <vector>

namespace tracer::cli {

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns 0 on success, 1 for validation errors and 2 for runtime
/// failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace tracer::cli
