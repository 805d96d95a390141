#ifndef TURING_CLI_HPP
#define TURING_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace turing::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kClassifier = 3,
  kIo = 4,
};

// Runs one subcommand (gen | attack | eval | transfer | fourier | boyd | sweep).
// `args` excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Shortest round-trip decimal form of a double, as used in CSV output.
std::string format_double(double value);

}  // namespace turing::cli

#endif  // TURING_CLI_HPP
