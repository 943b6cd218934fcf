#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tablequake::cli {

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 1 for validation errors (bad flags included), 2 for I/O errors.
//
// `--flagfile FILE` names a JSON object whose section for the chosen
// subcommand supplies flags missing from the command line, e.g.
// {"perturb": {"seed": 7, "kinds": ["row", "col"]}}.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tablequake::cli
