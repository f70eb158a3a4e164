#pragma once

#include <iosfwd>

namespace weakmcn::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// Subcommands: gen-data, pretrain-det, train, eval, ablate, gradcheck.
// Returns 0 on success, 1 on a usage or configuration error (naming the
// offending token), 2 on a runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace weakmcn::harness
