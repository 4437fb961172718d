// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line front: run, score, callgraph {reachable, paths, metadata}, serve.
// Exit codes: 0 success, 1 internal error (or a scenario whose checks failed),
// 2 usage or input error.

#include <iosfwd>
#include <string>
#include <vector>

#include "crs/scenario.hpp"

namespace crs {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace crs
