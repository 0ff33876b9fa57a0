#pragma once

#include <iosfwd>

namespace ddtcdr {

// Entry point of the `ddtcdr` command-line tool. Returns the process exit
// code; failures are reported on `err` as one `error: <kind>: <message>` line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ddtcdr
