#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

namespace foldflow::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Entry point shared by the executable and the tests. Messages go to `out`
/// (results, run directory paths) and `err` (warnings, diagnostics).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Creates <root>/<kind>-<YYYYmmdd-HHMMSS>[-k] without touching existing
/// directories; k counts up until a fresh name is found.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& kind);

}  // namespace foldflow::cli
