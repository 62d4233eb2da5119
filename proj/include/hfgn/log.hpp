#pragma once

#include <string>

namespace hfgn {

/// Diagnostics go to stderr unless silenced (the test binaries silence them).
void warn(const std::string& message);
void info(const std::string& message);
void set_quiet(bool quiet);

} // namespace hfgn
