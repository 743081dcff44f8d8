#ifndef RISKCAST_CLI_HPP
#define RISKCAST_CLI_HPP

#include <iosfwd>

// Command line front end: synth, train, eval, predict, bench, inspect.
// Exposed as a function so tests can drive it in-process.
namespace riskcast {

// Returns the process exit code: 0 ok, 2 usage error, 3 I/O error,
// 4 numeric divergence.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace riskcast

#endif  // RISKCAST_CLI_HPP
