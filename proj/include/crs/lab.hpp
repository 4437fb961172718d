// SPDX-License-Identifier: Apache-2.0
#pragma once

// Simulation lab: synthetic vulnerable targets described as data.
//
// A target's crash condition is a conjunction of byte predicates (the trigger)
// plus a crash-site source line. A workspace (the repository or a patched copy
// of it) changes behavior in two ways only:
//
//   * a line containing  LAB_REJECT(<pred> && <pred> ...)  installs an input
//     guard; inputs matching every predicate of any guard are rejected before
//     they reach the vulnerable code;
//   * removing the crash-site line (matched by its trimmed text) removes the
//     crash.
//
// Predicates in directives use the manifest vocabulary:
//   magic_prefix("GET "), substring("\x00\xff"), length_at_least(64),
//   byte_equals(4, 0x7f)

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crs/domain.hpp"
#include "crs/handles.hpp"

namespace crs {

enum class PredicateKind { MagicPrefix, Substring, LengthAtLeast, ByteEquals };

struct Predicate {
  PredicateKind kind = PredicateKind::MagicPrefix;
  Bytes value;               // MagicPrefix, Substring
  std::size_t number = 0;    // LengthAtLeast threshold, ByteEquals offset
  std::uint8_t byte = 0;     // ByteEquals value
  bool operator==(const Predicate&) const = default;
};

bool matches(const Predicate& p, const Bytes& input);
bool matches_all(const std::vector<Predicate>& conjunction, const Bytes& input);
// Directive spelling of a predicate, e.g. magic_prefix("GET ").
std::string to_source(const Predicate& p);
// Parses "a && b && ..." in directive syntax. Throws ParseError.
std::vector<Predicate> parse_conjunction(std::string_view text);

struct SiteRef {
  std::string file;
  int line = 0;
  std::string function;
  bool operator==(const SiteRef&) const = default;
};

struct Conjunct {
  Predicate predicate;
  SiteRef site;  // the branch in the source that tests this predicate
};

struct BehaviorRule {
  std::vector<Predicate> when;
  std::string tag;
};

struct FunctionalityCheck {
  std::string name;
  Bytes input;
  std::string expect;  // behavior tag
};

struct HarnessSpec {
  std::string entry_function;
  std::string file;
};

struct RequiredMarker {
  std::string file;
  std::string text;
};

struct LabTarget {
  std::string name;
  std::string project;
  Language language = Language::C_CPP;
  std::map<std::string, std::string> source_files;  // relative path -> text
  std::map<std::string, HarnessSpec> harnesses;
  std::set<std::string> vulnerable_harnesses;
  std::vector<Conjunct> trigger;
  SiteRef crash_site;
  std::vector<SiteRef> call_stack;  // callers of the crash site, innermost first
  Sanitizer sanitizer_kind = Sanitizer::Address;
  std::string crash_type;
  std::vector<BehaviorRule> behaviors;
  std::string default_tag = "ok";
  std::vector<FunctionalityCheck> functionality_checks;
  std::vector<RequiredMarker> required_markers;
  std::vector<Bytes> seeds;
  std::vector<std::string> signature_markers;  // project root markers for signatures
  std::uint32_t execs_per_second = 100;
};

// crash_site and conjunct sites exist within source_files, harnesses non-empty.
void validate(const LabTarget& t);

// Manifest bytes are either a plain string or {"hex": "..."}.
Bytes bytes_from_json(const json& j);
json bytes_to_json(const Bytes& b);

// `base_dir` resolves the manifest's "source_dir".
LabTarget lab_target_from_json(const json& doc, const fs::path& base_dir);
LabTarget load_lab_target(const fs::path& manifest_path);

// Writes every source file under `dir`.
void materialize(const LabTarget& t, const fs::path& dir);

// All regular files under `root`, keyed by relative generic path.
std::map<std::string, std::string> read_tree(const fs::path& root);

struct WorkspaceSemantics {
  std::vector<std::vector<Predicate>> guards;
  std::optional<int> crash_line;  // current line of the crash site, if still present
};

// Throws ParseError on malformed directives.
WorkspaceSemantics analyze_workspace(const LabTarget& t,
                                     const std::map<std::string, std::string>& files);
WorkspaceSemantics analyze_workspace(const LabTarget& t, const fs::path& root);

struct LabOutcome {
  bool crashed = false;
  std::string behavior;  // "crash", "rejected", a rule tag or the default tag
  std::string text;      // crash report or fuzzer output
};

LabOutcome run_harness(const LabTarget& t, const FuzzerTarget& target, const Bytes& input,
                       const WorkspaceSemantics& ws);
// Original sources, the target's own sanitizer and first vulnerable harness.
LabOutcome run_harness(const LabTarget& t, const Bytes& input);

CoverageSummary trace_coverage(const LabTarget& t, const Bytes& input);
BuildResult lab_build(const LabTarget& t, const fs::path& workspace);
std::vector<CheckResult> run_functionality_tests(const LabTarget& t, const fs::path& workspace);

// Seeded mutation loop over `corpus` (plus the target's seeds). Executions are
// duration × execs_per_second; the clock, when given, advances by the time spent.
FuzzOutcome scripted_fuzz_run(const LabTarget& t, const FuzzerTarget& target,
                              const fs::path& workspace, Duration duration, std::uint64_t seed,
                              Clock* clock = nullptr, const std::vector<Bytes>& corpus = {});

class LabHarnessRunner final : public HarnessRunner {
 public:
  LabHarnessRunner(const LabTarget& target, fs::path repo_root);
  HarnessOutcome run(const FuzzerTarget& target, const Bytes& input,
                     const fs::path& workspace = {}) override;

 private:
  const LabTarget& target_;
  fs::path repo_root_;
};

class LabCoverageTracer final : public CoverageTracer {
 public:
  explicit LabCoverageTracer(const LabTarget& target) : target_(target) {}
  CoverageSummary trace(const FuzzerTarget&, const Bytes& input) override {
    return trace_coverage(target_, input);
  }

 private:
  const LabTarget& target_;
};

class LabBuildHandle final : public BuildHandle {
 public:
  explicit LabBuildHandle(const LabTarget& target) : target_(target) {}
  BuildResult build(const fs::path& workspace) override { return lab_build(target_, workspace); }

 private:
  const LabTarget& target_;
};

class LabTestRunner final : public TestRunner {
 public:
  explicit LabTestRunner(const LabTarget& target) : target_(target) {}
  std::vector<CheckResult> run(const fs::path& workspace) override {
    return run_functionality_tests(target_, workspace);
  }

 private:
  const LabTarget& target_;
};

class LabFuzzRunner final : public FuzzRunner {
 public:
  LabFuzzRunner(const LabTarget& target, Clock* clock, std::vector<Bytes> corpus = {})
      : target_(target), clock_(clock), corpus_(std::move(corpus)) {}
  using FuzzRunner::fuzz;
  FuzzOutcome fuzz(const FuzzerTarget& target, const fs::path& workspace, Duration duration,
                   std::uint64_t seed, const std::vector<Bytes>& corpus) override {
    std::vector<Bytes> all = corpus_;
    all.insert(all.end(), corpus.begin(), corpus.end());
    return scripted_fuzz_run(target_, target, workspace, duration, seed, clock_, all);
  }

 private:
  const LabTarget& target_;
  Clock* clock_;
  std::vector<Bytes> corpus_;
};

// Generator mini-language, one command per line ('#' starts a comment):
//   literal "<bytes>"      append bytes (C escapes, \xNN)
//   repeat "<bytes>" <n>   append bytes n times
//   range <a> <b>          append every byte value from a to b inclusive
//   concat <file>          append the contents of an already written file
//   write <file>           write the buffer to <file> and clear it
// File names are plain names inside the working directory.
ExecResult run_lab_script(const std::string& source, const fs::path& workdir);

class LabScriptExecutor final : public ScriptExecutor {
 public:
  ExecResult execute(const std::string& source, const fs::path& workdir, Duration) override {
    return run_lab_script(source, workdir);
  }
  std::string language() const override { return "gen"; }
};

// Runs scripts with an external interpreter (python3 by default) under
// `timeout`, with the working directory as cwd.
class ProcessScriptExecutor final : public ScriptExecutor {
 public:
  explicit ProcessScriptExecutor(std::string interpreter = "python3")
      : interpreter_(std::move(interpreter)) {}
  ExecResult execute(const std::string& source, const fs::path& workdir,
                     Duration wall_cap) override;
  std::string language() const override { return "python"; }

 private:
  std::string interpreter_;
};

}  // namespace crs
