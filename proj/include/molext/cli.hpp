#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace molext::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitNoSignal = 4;

inline constexpr const char* kVersion = "1.0.0";

// Default output directory when --out is not given.
inline constexpr const char* kOutputDirEnv = "MOLEXT_OUTPUT_DIR";

// Runs one command line (args excludes the program name). Human-readable
// output goes to `out`, diagnostics to `err`; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace molext::cli
