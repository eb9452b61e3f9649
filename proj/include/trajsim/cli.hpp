#ifndef TRAJSIM_CLI_HPP_
#define TRAJSIM_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace trajsim {

/// Runs one pipeline command. args excludes the program name.
/// Returns 0 on success, 1 on a domain error, 2 on a usage error.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Applies TRAJSIM_THREADS (0 or unset = OpenMP default).
void apply_thread_env();

}  // namespace trajsim

#endif  // TRAJSIM_CLI_HPP_
