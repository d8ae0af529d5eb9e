#pragma once

#include <iosfwd>

namespace dexforge::cli {

/// Exit codes: 0 success, 1 contract violation or invalid data, 2 bad arguments.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dexforge::cli
