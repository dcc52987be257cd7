#pragma once

#include <iosfwd>

namespace declare::cli {

// Runs the `declare` command line. Returns 0 on success, 2 for usage errors
// and 1 for every other failure, after printing a one-line diagnostic to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace declare::cli
