#pragma once

#include <ostream>

namespace rrst {

/// Entry point of the `rrst` command line tool. Returns the process exit
/// code: 0 on success, 1 on numerical failure, 2 on bad input or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rrst
