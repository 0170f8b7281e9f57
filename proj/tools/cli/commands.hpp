// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
#ifndef REVFT_TOOLS_COMMANDS_HPP_
#define REVFT_TOOLS_COMMANDS_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace revft::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // tolerance violation or runtime error
inline constexpr int kExitConfig = 2;   // bad flags, bad config, degenerate scaling

/// `args` excludes the program name: {"gradcheck", "--config", "ok.json"}.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace revft::cli

#endif  // REVFT_TOOLS_COMMANDS_HPP_
