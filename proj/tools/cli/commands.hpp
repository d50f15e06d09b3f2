#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dphi::cli {

/// Runs one subcommand. `args` excludes the program name. Progress goes to the
/// log sink; a failure prints one line "deltaphi: error: <category>: <message>"
/// to `err` and returns nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dphi::cli
