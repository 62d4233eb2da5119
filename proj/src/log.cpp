#include "hfgn/log.hpp"

#include <atomic>
#include <iostream>

namespace hfgn {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool quiet) { g_quiet = quiet; }

void warn(const std::string& message) {
    if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

void info(const std::string& message) {
    if (!g_quiet) std::cerr << message << '\n';
}

} // namespace hfgn
