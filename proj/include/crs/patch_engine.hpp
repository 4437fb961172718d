// SPDX-License-Identifier: Apache-2.0
#pragma once

// LLM-driven patching: target-function identification, candidate generation,
// function rewrite into a private workspace, diff creation, the four-criteria
// validation pipeline, and XPatch for tasks without a POV.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crs/callgraph.hpp"
#include "crs/handles.hpp"
#include "crs/pov_engine.hpp"
#include "crs/router.hpp"
#include "crs/submission.hpp"

namespace crs {

enum class Identification { LlmOnly, DiffOnly, Hybrid, PathAware, KnowledgeEnhanced };

std::string to_string(Identification i);

struct PatchStrategyConfig {
  std::string strategy_name = "patch_delta";
  Identification identification = Identification::LlmOnly;
  int max_iterations = 5;
  int parallel_processes = 3;
  Duration timeout = minutes(30);
  // Full-scan prompts push the model past the crash stack.
  bool enhanced_prompting = false;

  // Preset for a roster name; full-mode names fall back to LLM identification.
  static PatchStrategyConfig named(const std::string& strategy);
};

// DiffOnly, Hybrid and PathAware need a commit diff.
void validate(const PatchStrategyConfig& c, ChallengeMode mode);

struct PatchCandidate {
  FunctionRecord function;
  std::string replacement_body;
  std::string rationale;
};

class StaleRecord : public Error {
 public:
  using Error::Error;
};

// Example fixes keyed by (crash class, CWE id); "*" matches any CWE.
class SamplePatchCatalog {
 public:
  void add(const std::string& crash_class, const std::string& cwe, std::string diff_text);
  std::optional<std::string> lookup(const std::string& crash_class, const std::string& cwe = "*") const;
  static SamplePatchCatalog defaults();

 private:
  std::map<std::pair<std::string, std::string>, std::string> entries_;
};

// Sanitizer crash class of a report ("heap-buffer-overflow", "java.io.InvalidClassException").
std::string crash_class(const std::string& report);

struct PatchServices {
  Router* router = nullptr;
  ProviderHandle* evaluator = nullptr;  // identification and XPatch scoring
  const CallGraph* graph = nullptr;
  HarnessRunner* runner = nullptr;
  CoverageTracer* coverage = nullptr;  // path-aware feedback
  BuildHandle* build = nullptr;
  TestRunner* tests = nullptr;
  FuzzRunner* fuzz = nullptr;  // XPatch validation
  SubmissionService* submissions = nullptr;
  Clock* clock = nullptr;
  IdGenerator* ids = nullptr;
  WorkdirFactory* workdirs = nullptr;
  const SamplePatchCatalog* catalog = nullptr;
  fs::path repo_root;
  std::function<bool()> cancelled;
};

struct IdentifiedTargets {
  std::vector<FunctionRecord> functions;
  std::vector<std::string> warnings;
};

// The reply format identification prompts ask for: {"functions": [{"name", "file"}]}.
std::vector<std::pair<std::string, std::string>> parse_function_list(const std::string& reply);

IdentifiedTargets identify_targets(const ChallengeTask& task,
                                   const std::optional<std::string>& crash_report,
                                   const PatchStrategyConfig& config, const PatchServices& services,
                                   const std::optional<std::string>& expert_analysis = {});

// Copies `repo_root` to `dest` and splices the replacement over the recorded
// span. Throws StaleRecord when the span no longer matches.
fs::path rewrite_function(const fs::path& repo_root, const FunctionRecord& function,
                          const std::string& replacement_body, const fs::path& dest);

// In-place variant for several candidates in one workspace.
void splice_functions(const fs::path& workspace, const std::vector<PatchCandidate>& candidates);

// Current text of the recorded span in `root`, or StaleRecord.
std::string read_function_span(const fs::path& root, const FunctionRecord& function);

struct ValidationReport {
  ValidationRecord record;
  bool infra_failure = false;  // a step could not run; the record has Unknowns
  std::string failed_step;     // "applies", "compiles", "povs_blocked", "tests_pass"
  std::string detail;          // feedback material for the failed step
};

// applies -> compiles -> povs_blocked -> tests_pass, stopping at the first
// Fail (later steps stay Unknown). Infrastructure failures leave the step
// Unknown and stop.
ValidationReport validate_patch(const std::string& diff_text, const ChallengeTask& task,
                                const std::vector<PovSubmission>& known_povs,
                                const PatchServices& services);

struct XPatchConfig {
  double trigger_fraction = 0.5;
  std::size_t top_k = 5;
  int score_threshold = 7;
  Duration fuzz_validation = seconds(60);
  int max_submissions = 3;
  std::uint64_t fuzz_seed = 1;
};

void validate(const XPatchConfig& c);

// The POV criterion becomes a timed fuzz run of every target on the patched tree.
ValidationReport validate_xpatch(const std::string& diff_text, const ChallengeTask& task,
                                 const std::vector<FuzzerTarget>& targets, const XPatchConfig& config,
                                 const PatchServices& services);

// Reply format for candidates:
//   FUNCTION: <name> [<file>]
//   ```<lang>
//   <complete replacement of the function>
//   ```
// and for context requests: {"requests": [{"file": ..., "function": ...}]}.
struct PatchReply {
  std::vector<std::pair<std::pair<std::string, std::string>, std::string>> functions;  // (name, file) -> body
  std::vector<std::pair<std::string, std::string>> context_requests;                 // (file, function)
};
PatchReply parse_patch_reply(const std::string& reply);

struct PatchRunResult {
  std::optional<PatchSubmission> patch;
  std::optional<Decision> decision;
  std::size_t llm_calls = 0;
  std::size_t iterations = 0;
  std::vector<ValidationReport> attempts;
  std::vector<std::string> notes;
};

json to_json_doc(const PatchRunResult& r);

// Per model in priority order, up to max_iterations rounds of propose ->
// rewrite -> diff -> validate; submits the first fully valid patch.
PatchRunResult run_patch_strategy(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                                  const PatchStrategyConfig& config, const PatchServices& services,
                                  const std::optional<Conversation>& pov_conversation = {});

// Runs `parallel_processes` copies with rotated model order, each in its own
// workspaces; the first valid patch wins and stops the others. With
// `sequential` the copies run one after another, for reproducible runs.
PatchRunResult run_patch_processes(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                                   const PatchStrategyConfig& config, const PatchServices& services,
                                   const std::optional<Conversation>& pov_conversation = {},
                                   bool sequential = false);

// elapsed >= trigger_fraction * window and no POV.
bool xpatch_gate_open(const ChallengeTask& task, Timestamp now, bool pov_exists,
                      const XPatchConfig& config);

// Scores >= threshold, descending (stable), first top_k.
std::vector<std::pair<FunctionRecord, int>> select_xpatch_targets(
    std::vector<std::pair<FunctionRecord, int>> scored, const XPatchConfig& config);

PatchRunResult xpatch_run(const ChallengeTask& task, const std::vector<FuzzerTarget>& targets,
                          const XPatchConfig& config, const PatchStrategyConfig& patch_config,
                          const PatchServices& services);

}  // namespace crs
