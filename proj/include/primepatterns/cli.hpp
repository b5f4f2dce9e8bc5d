#pragma once

#include <iosfwd>

namespace primepatterns::cli {

// Parses argv, runs one subcommand and returns the process exit status.
// Errors print a single `error: kind=... code=... message=...` line to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace primepatterns::cli
