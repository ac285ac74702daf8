#pragma once

#include <iosfwd>

namespace cpwloss::cli {

/// Parses arguments, resolves the config and runs one subcommand.
/// Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpwloss::cli
