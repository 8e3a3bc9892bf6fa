#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vsod {

/// Name of the environment variable that sets the seed when --seed is absent.
inline constexpr const char* kSeedEnvVar = "VSOD_SEED";

/// Runs the command line (arguments without the program name). Returns the exit code;
/// diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vsod
