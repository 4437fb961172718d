// SPDX-License-Identifier: Apache-2.0
#pragma once

// LLM-driven POV generation: prompt assembly, generator-script execution,
// harness replay, coverage feedback and the per-model iteration loop, plus the
// full-scan ranking and call-path rounds built on top of it.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crs/callgraph.hpp"
#include "crs/handles.hpp"
#include "crs/router.hpp"
#include "crs/submission.hpp"

namespace crs {

struct CweCategory {
  std::string id;    // "CWE-119"
  std::string name;  // "Buffer Overflow"
};

const std::vector<CweCategory>& c_cwe_catalog();
// The seven representative Java categories followed by `extra` (at most eight).
std::vector<CweCategory> java_cwe_catalog(const std::vector<CweCategory>& extra = {});

struct PovStrategyConfig {
  std::string strategy_name = "xs0_delta";
  int max_iterations = 5;
  Duration timeout = minutes(30);
  bool multi_input = false;
  int inputs_per_iteration = 1;
  std::vector<CweCategory> cwe_catalog;
  bool use_call_paths = false;
  bool inject_modified_functions = false;
  bool delta = true;  // the prompt carries the commit diff
  bool rank_functions = false;  // full-scan: evaluator-ranked reachable functions

  // Preset for a roster name ("xs0_delta", "as0_delta", "xs0_c_full", ...).
  static PovStrategyConfig named(const std::string& strategy, Language language);
};

// multi_input <=> inputs_per_iteration == 5, otherwise 1; positive limits.
void validate(const PovStrategyConfig& c);

// "x.bin", or "x1.bin".."x5.bin" for multi-input strategies.
std::vector<std::string> expected_outputs(const PovStrategyConfig& c);

struct GeneratorScript {
  std::string source_text;
  std::vector<std::string> expected_outputs;
};

class NoCodeBlock : public Error {
 public:
  using Error::Error;
};

class ExecutorFailure : public Error {
 public:
  using Error::Error;
};

class MissingOutputs : public Error {
 public:
  explicit MissingOutputs(std::vector<std::string> names);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

// Extra prompt material the engine may add to the first user turn.
struct PromptContext {
  std::string harness_source;
  std::vector<FunctionRecord> modified_functions;  // injected when configured
  std::optional<CweCategory> focus;
  std::optional<std::string> call_path;    // rendered path for targeted rounds
  std::optional<std::string> sarif_hint;   // forwarded SARIF guidance
  std::vector<std::pair<FunctionRecord, int>> ranked_functions;  // full-scan
};

// Throws InvariantError when a delta strategy has no commit diff.
Conversation build_initial_prompt(const ChallengeTask& task, const FuzzerTarget& target,
                                  const PovStrategyConfig& config, const PromptContext& context,
                                  const std::string& script_language = "python");

std::string sanitizer_guidance(Sanitizer sanitizer);
std::string language_guidance(Language language);
std::string output_contract(const std::vector<std::string>& outputs, const std::string& script_language);

// Function source clipped to 2,000 lines.
std::string function_context(const FunctionRecord& f, std::size_t max_lines = 2000);

// Throws NoCodeBlock.
GeneratorScript extract_generator_script(const std::string& response, const PovStrategyConfig& config);

struct GeneratorRun {
  std::vector<std::pair<std::string, Bytes>> blobs;  // expected-output order
  std::vector<std::string> missing;
};

// Executes in `workdir` (which must be empty) with a 60 s cap. Throws
// ExecutorFailure on a failed run and MissingOutputs when nothing was written;
// partial multi-input output is a success with `missing` filled in.
GeneratorRun run_generator(const GeneratorScript& script, const fs::path& workdir,
                           ScriptExecutor& executor, Duration wall_cap = seconds(60));

// Feedback turn: truncated output (200 lines), the retry checklist and, when
// present, executed functions and branch contexts.
std::string build_feedback(const std::string& fuzzer_output,
                           const std::optional<CoverageSummary>& coverage);

// Receives inputs that ran without crashing.
class CorpusSink {
 public:
  virtual ~CorpusSink() = default;
  virtual void deposit(const FuzzerTarget& target, const Bytes& input) = 0;
};

struct PovServices {
  Router* router = nullptr;
  const CallGraph* graph = nullptr;
  HarnessRunner* runner = nullptr;
  CoverageTracer* coverage = nullptr;  // optional
  ScriptExecutor* executor = nullptr;
  CorpusSink* corpus = nullptr;        // optional
  SubmissionService* submissions = nullptr;  // optional: without it POVs are only returned
  Clock* clock = nullptr;
  IdGenerator* ids = nullptr;
  WorkdirFactory* workdirs = nullptr;
  ProviderHandle* evaluator = nullptr;  // full-scan ranking
  std::vector<std::string> project_markers;
  std::function<bool()> cancelled;  // checked before each iteration
};

struct PovRunResult {
  std::optional<PovSubmission> pov;
  std::optional<Decision> decision;
  std::size_t llm_calls = 0;
  std::size_t iterations = 0;
  bool timed_out = false;
  // The dialogue that produced the POV; patch strategies reuse it.
  std::optional<Conversation> conversation;
  std::vector<std::string> notes;
};

json to_json_doc(const PovRunResult& r);

// Per model in priority order: fresh dialogue, up to max_iterations rounds of
// prompt -> script -> harness. Returns on the first replay-confirmed crash.
PovRunResult run_pov_strategy(const ChallengeTask& task, const FuzzerTarget& target,
                              const PovStrategyConfig& config, const PovServices& services,
                              const PromptContext& context);

// Evaluator scores reachable functions 1-10; descending, ties by graph index.
// Java runs both rubrics and keeps the per-function maximum.
std::vector<std::pair<FunctionRecord, int>> rank_reachable_functions(const CallGraph& graph,
                                                                     const std::string& harness,
                                                                     Language language,
                                                                     ProviderHandle& evaluator);

// Same scoring over an explicit candidate list, ties keep list order.
std::vector<std::pair<FunctionRecord, int>> rank_functions(const std::vector<FunctionRecord>& fns,
                                                           Language language,
                                                           ProviderHandle& evaluator);

// Parses [{"name": ..., "score": n}, ...] (first fenced block or whole reply).
std::map<std::string, int> parse_function_scores(const std::string& reply);

// One targeted single-call attempt per call path (at most 20), then one
// aggregated attempt when all of them fail.
PovRunResult call_path_prompt_rounds(const ChallengeTask& task, const FuzzerTarget& target,
                                     const std::vector<FunctionRecord>& modified,
                                     const PovStrategyConfig& config, const PovServices& services,
                                     const PromptContext& context);

}  // namespace crs
