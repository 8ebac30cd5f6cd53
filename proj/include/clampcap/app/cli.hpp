#pragma once

#include <iosfwd>

namespace clampcap::app {

/// Entry point of the clampcap command line. Returns the process exit
/// status; failures print one "error: kind=<Kind> message=..." line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Applies CLAMPCAP_LOG (trace, debug, info, warn, error, off) and routes
/// log output to stderr.
void configure_logging();

}  // namespace clampcap::app
