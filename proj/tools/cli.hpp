#pragma once

#include <ostream>

namespace emf::cli {

/// Parses argv, runs the selected subcommand and returns the exit status.
/// Failures print one "error,<code>,<message>" line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace emf::cli
