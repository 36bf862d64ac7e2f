#pragma once

#include <string>
#include <vector>

namespace heatmpc::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kSolver = 3, kNonConvergence = 4, kInterrupted = 130 };

/// Parses `args` (without the program name) and runs the selected command.
int run(const std::vector<std::string>& args);

}  // namespace heatmpc::cli
