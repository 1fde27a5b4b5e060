#pragma once

#include <iosfwd>

namespace gain {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the gain command-line tool. Subcommands: train, eval, bench,
// flops, gradcheck, ablate, dump-attn. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gain
