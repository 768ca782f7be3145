#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace segcurate {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitUsage = 2;

// Parses argv (argv[0] is the program name) and runs one subcommand.
// Returns 0 on success, 1 on validation findings or data errors, 2 on usage
// errors (the failing command's help is written to `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace segcurate
