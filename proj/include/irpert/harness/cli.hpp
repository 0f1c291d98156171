#pragma once

#include <iosfwd>

namespace irpert {

// Entry point of the irpert tool. Exit codes: 0 success, 1 usage, 2 data
// error, 3 oracle error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace irpert
