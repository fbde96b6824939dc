#pragma once

namespace memesent {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitRuntime = 3,
};

/// Entry point for `memesent <command> ...`. Diagnostics go to stderr;
/// results are written to files only.
int run_cli(int argc, const char* const* argv);

} // namespace memesent
