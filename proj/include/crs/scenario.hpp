// SPDX-License-Identifier: Apache-2.0
#pragma once

// Task manifests: boot every service in-process from one JSON document and
// run the task end to end.
//
// Manifest (paths are relative to the manifest file):
//   {
//     "task": {"task_id", "mode", "language"?, "project_name"?, "harness_names"?,
//              "time_window_s", "received_at_ms"?, "commit_diff_file"? | "commit_diff"?},
//     "lab_target": "targets/x.json",
//     "call_graph": "graphs/x.json",
//     "providers": {"priority": [...], "scripts": {"<name>": [...] | "file.json"},
//                   "evaluators": [...], "ranking_model"?, "dedup_evaluators"?,
//                   "sarif_matcher"?, "live"?: [http provider configs]},
//     "policy": {overrides} | "policy_file": "...",
//     "sarif_reports": [{"file", "sarif_id", "at_s"}],
//     "competition": {"pov"|"patch"|"sarif"|"bundle": ["Passed"|"Failed"|"Transient", ...]},
//     "orchestrator": {"workers", "roster", "traditional_fuzzer", "fuzz_slice_s",
//                      "patch_processes", "xpatch": {...}},
//     "run": {"clock", "seed"},
//     "expect": {...}
//   }

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crs/coordinator.hpp"

namespace crs {

// The manifest (or something it points to) is unusable.
class ManifestError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct RunOptions {
  std::optional<std::string> clock;      // "system" | "simulated"
  std::optional<std::uint64_t> seed;
  std::optional<std::string> providers;  // script document path or "live"
  std::optional<fs::path> workdir;       // scratch space; a fresh temp dir by default
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// Flags win over CRS_CLOCK / CRS_SEED / CRS_PROVIDERS, which win over the
// manifest's "run" section.
RunOptions resolve_options(const RunOptions& flags, const EnvLookup& env, const json& manifest_run);

struct ScenarioOutcome {
  json report;
  bool ok = true;  // scripts consumed exactly and every expectation held
  std::vector<std::string> failures;
};

// Throws ManifestError for manifest problems.
ScenarioOutcome run_manifest(const fs::path& manifest_path, const RunOptions& flags,
                             const EnvLookup& env = process_env());

// Checks an "expect" section against a report.
std::vector<std::string> check_expectations(const json& expect, const json& report);

}  // namespace crs
