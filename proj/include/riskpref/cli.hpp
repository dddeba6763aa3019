#pragma once

namespace riskpref {

/// Runs one `riskpref` subcommand; returns the process exit status.
int dispatch(int argc, const char* const* argv);

}  // namespace riskpref
