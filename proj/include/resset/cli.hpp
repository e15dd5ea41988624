#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace resset::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kUsage = 2, kNumericFailure = 3 };

// Entry point of the `resset` tool. `args` excludes the program name, e.g.
// {"train", "--config", "run.cfg", "epochs=10"}. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace resset::cli
