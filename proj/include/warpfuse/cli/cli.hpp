#pragma once

#include <string>
#include <vector>

namespace warpfuse::cli {

// Dispatches one subcommand (solve, warp, align, synth, eval, toy-forward).
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
// Identical invocations on identical inputs produce byte-identical outputs.
int run_cli(int argc, const char* const* argv);

// Same, args without the program name. Convenience for in-process tests.
int run_cli(const std::vector<std::string>& args);

}  // namespace warpfuse::cli
