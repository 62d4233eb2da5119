#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hfgn {

/// Runs one subcommand. Returns 0 on success, 1 on usage errors and 2 on
/// data errors (missing or malformed files, inconsistent checkpoints).
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hfgn
