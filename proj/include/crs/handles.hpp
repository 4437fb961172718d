// SPDX-License-Identifier: Apache-2.0
#pragma once

// Interfaces to the execution environment: harness runs, coverage, generator
// scripts, builds, functionality tests and timed fuzzing. The lab provides
// deterministic implementations; real deployments plug in process-backed ones.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crs/core.hpp"
#include "crs/domain.hpp"

namespace crs {

namespace fs = std::filesystem;

// The environment failed (missing binary, I/O error); distinct from a clean
// "no crash" or "compile error" answer.
class InfraError : public Error {
 public:
  using Error::Error;
};

struct HarnessOutcome {
  bool crashed = false;
  std::string text;  // crash report when crashed, fuzzer output otherwise
};

class HarnessRunner {
 public:
  virtual ~HarnessRunner() = default;
  // Runs `input` through the harness built from `workspace` (the task's
  // repository when empty). Throws InfraError.
  virtual HarnessOutcome run(const FuzzerTarget& target, const Bytes& input,
                             const fs::path& workspace = {}) = 0;
};

struct BranchPoint {
  std::string file;
  int line = 0;
  bool taken = false;
  int context_first_line = 0;
  std::vector<std::string> context;  // line ± 3, clipped at file bounds
  bool operator==(const BranchPoint&) const = default;
};

struct CoverageSummary {
  std::vector<std::string> executed_functions;
  std::vector<BranchPoint> branch_points;
  bool operator==(const CoverageSummary&) const = default;
};

class CoverageTracer {
 public:
  virtual ~CoverageTracer() = default;
  virtual CoverageSummary trace(const FuzzerTarget& target, const Bytes& input) = 0;
};

struct ExecResult {
  int exit_code = 0;
  bool timed_out = false;
  std::string diagnostics;  // stderr excerpt
};

class ScriptExecutor {
 public:
  virtual ~ScriptExecutor() = default;
  // Executes `source` with `workdir` as its only writable location.
  virtual ExecResult execute(const std::string& source, const fs::path& workdir,
                             Duration wall_cap) = 0;
  // Fence language the prompt asks the model to use ("python", "gen", ...).
  virtual std::string language() const = 0;
};

struct BuildResult {
  bool ok = false;
  std::string diagnostics;
};

class BuildHandle {
 public:
  virtual ~BuildHandle() = default;
  virtual BuildResult build(const fs::path& workspace) = 0;  // throws InfraError
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

class TestRunner {
 public:
  virtual ~TestRunner() = default;
  virtual std::vector<CheckResult> run(const fs::path& workspace) = 0;  // throws InfraError
};

struct FuzzOutcome {
  bool crash_found = false;
  std::string report;
  Bytes input;  // the crashing input
  std::uint64_t executions = 0;
};

class FuzzRunner {
 public:
  virtual ~FuzzRunner() = default;
  // Fuzzes the harness built from `workspace` for `duration` of clock time,
  // starting from `corpus` in addition to the runner's own seeds.
  virtual FuzzOutcome fuzz(const FuzzerTarget& target, const fs::path& workspace,
                           Duration duration, std::uint64_t seed,
                           const std::vector<Bytes>& corpus) = 0;
  FuzzOutcome fuzz(const FuzzerTarget& target, const fs::path& workspace, Duration duration,
                   std::uint64_t seed) {
    return fuzz(target, workspace, duration, seed, {});
  }
};

// Hands out private, freshly created directories under one root.
class WorkdirFactory {
 public:
  explicit WorkdirFactory(fs::path root);
  fs::path create(std::string_view label);
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  IdGenerator ids_;
};

}  // namespace crs
