#pragma once

#include <ostream>

namespace mrgp {

// Entry point of the mrgp command-line tool. Exit codes: 0 success,
// 1 failed verification or internal error, 2 bad arguments or config,
// 3 data incompatible with the model or window.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mrgp
