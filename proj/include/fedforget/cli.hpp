// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace fedforget {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Subcommands: gen-world, pretrain, train, retrain, eval, report, replay.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fedforget
